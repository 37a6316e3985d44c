#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/mhdsim/electromagnetics.hpp"
#include "mhdshred/mhdsim/grid.hpp"
#include "mhdshred/mhdsim/params.hpp"

namespace mhdshred::mhdsim {

namespace detail {

enum class CellSide { Fluid, Solid, Wall, Self };

/// Neighbour of cell (i, j, k) across face `dir` and its kind.
inline CellSide cell_neighbour(const Grid& g, int i, int j, int k, int dir, std::size_t& nb) {
    const int a = kFaceAxis[dir];
    if (a == 2 && g.nz() == 1) return CellSide::Self;
    int c[3] = {i, j, k};
    c[a] += kFaceSign[dir];
    if (a == 2) c[2] = g.wrap_z(c[2]);
    if (c[a] < 0 || c[a] >= g.extent(a)) return CellSide::Wall;
    nb = g.index(c[0], c[1], c[2]);
    return g.solid(nb) ? CellSide::Solid : CellSide::Fluid;
}

}  // namespace detail

/// Largest step keeping the explicit energy update a convex combination,
/// which guarantees the discrete maximum principle.
inline double energy_dt_limit(const Grid& g, const CellArrays& uc, const MaterialProps& props) {
    const double alpha = props.thermal_diffusivity();
    double worst = 0.0;
    for (std::size_t c : g.fluid_cells()) {
        int i, j, k;
        g.ijk(c, i, j, k);
        double s = 0.0;
        for (int a = 0; a < 3; ++a)
            if (!(a == 2 && g.nz() == 1)) s += std::abs(uc[a][c]) / g.spacing(a);
        for (int dir = 0; dir < 6; ++dir) {
            std::size_t nb = 0;
            const double h = g.spacing(kFaceAxis[dir]);
            const auto side = detail::cell_neighbour(g, i, j, k, dir, nb);
            if (side == detail::CellSide::Fluid) s += alpha / (h * h);
            else if (side == detail::CellSide::Solid) s += 2.0 * alpha / (h * h);
        }
        worst = std::max(worst, s);
    }
    return worst > 0.0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
}

/// Upwind advection plus conduction plus a volumetric source. Solid cells are
/// Dirichlet boundaries at their stored temperature (applied on the face);
/// outer walls are adiabatic; z is periodic. `heat` may be empty.
inline std::vector<double> step_energy(const Grid& g, const std::vector<double>& T, const CellArrays& uc, double dt,
                                       const MaterialProps& props, const std::vector<double>& heat) {
    const double limit = energy_dt_limit(g, uc, props);
    if (!(dt > 0.0) || dt > limit * (1.0 + 1e-12)) throw TimeStepError("energy step exceeds monotone bound", limit);
    const double alpha = props.thermal_diffusivity();
    const double rc = props.rho0 * props.c_p;
    std::vector<double> out = T;
    for (std::size_t c : g.fluid_cells()) {
        int i, j, k;
        g.ijk(c, i, j, k);
        const double tc = T[c];
        double rate = 0.0;
        for (int dir = 0; dir < 6; ++dir) {
            const int a = kFaceAxis[dir];
            const double h = g.spacing(a);
            std::size_t nb = 0;
            const auto side = detail::cell_neighbour(g, i, j, k, dir, nb);
            if (side == detail::CellSide::Wall || side == detail::CellSide::Self) continue;
            const double tn = T[nb];
            // Upstream face: the -dir face when U > 0, the +dir face when U < 0.
            const double U = uc[a][c];
            if ((U > 0.0 && kFaceSign[dir] < 0) || (U < 0.0 && kFaceSign[dir] > 0)) rate += std::abs(U) * (tn - tc) / h;
            rate += alpha * (side == detail::CellSide::Solid ? 2.0 : 1.0) * (tn - tc) / (h * h);
        }
        if (!heat.empty()) rate += heat[c] / rc;
        out[c] = tc + dt * rate;
    }
    return out;
}

}  // namespace mhdshred::mhdsim
