#pragma once

#include <cmath>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/mhdsim/fields.hpp"
#include "mhdshred/mhdsim/grid.hpp"
#include "mhdshred/mhdsim/params.hpp"

namespace mhdshred::mhdsim {

/// Full solver state. Scalars are stored on every cell; solid cells carry
/// their fixed temperature (the Dirichlet value seen by the fluid) and zero
/// dynamic pressure.
struct FluidState {
    double time = 0.0;
    FaceVelocity u;
    std::vector<double> T;
    std::vector<double> p;
    std::vector<double> rho;
    CellVectorField B;

    friend bool operator==(const FluidState&, const FluidState&) = default;
};

inline void update_density(const std::vector<double>& T, const MaterialProps& props, double T0,
                           std::vector<double>& rho) {
    rho.resize(T.size());
    for (std::size_t c = 0; c < T.size(); ++c) {
        if (!std::isfinite(T[c])) throw PhysicsError("update_density: non-finite temperature");
        rho[c] = props.rho0 * (1.0 - props.beta * (T[c] - T0));
        if (!(rho[c] > 0.0)) throw PhysicsError("update_density: non-positive density at cell " + std::to_string(c));
    }
}

inline std::vector<double> update_density(const std::vector<double>& T, const MaterialProps& props, double T0) {
    std::vector<double> rho;
    update_density(T, props, T0, rho);
    return rho;
}

/// Hydrostatic reference pressure rho0 (g . x) at a point.
inline double hydrostatic(const MaterialProps& props, const Vec3& gravity, const Vec3& x) {
    return props.rho0 * dot(gravity, x);
}

/// Initial condition: uniform T0 in the fluid, T_pipe in the pipe, uniform
/// axial velocity u0 on every free face, B = B0(0), pressure p_ext plus the
/// hydrostatic part.
inline FluidState initial_state(const Grid& grid, const SimConfig& cfg) {
    FluidState s;
    s.time = 0.0;
    s.u = FaceVelocity(grid);
    for (int k = 0; k < grid.nz(); ++k)
        for (int j = 0; j < grid.ny(); ++j)
            for (int i = 0; i < grid.nx(); ++i)
                if (face_active(grid, face_cells(grid, 2, i, j, k))) s.u(2, i, j, k) = cfg.u0;
    s.T.assign(grid.cell_count(), cfg.T0);
    s.p.assign(grid.cell_count(), 0.0);
    for (std::size_t c = 0; c < grid.cell_count(); ++c) {
        if (grid.solid(c)) {
            s.T[c] = cfg.T_pipe;
        } else {
            s.p[c] = cfg.p_ext + hydrostatic(cfg.material, cfg.gravity, grid.center(c));
        }
    }
    update_density(s.T, cfg.material, cfg.T0, s.rho);
    s.B = CellVectorField(grid, cfg.drive.value(0.0));
    return s;
}

}  // namespace mhdshred::mhdsim
