#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/mhdsim/electromagnetics.hpp"
#include "mhdshred/mhdsim/fields.hpp"
#include "mhdshred/mhdsim/grid.hpp"
#include "mhdshred/mhdsim/poisson.hpp"
#include "mhdshred/mhdsim/state.hpp"

namespace mhdshred::mhdsim {

struct MomentumSettings {
    Vec3 gravity = {0.0, -9.81, 0.0};
    double axial_forcing = 0.0;  // Pa/m along +z
    double p_ext = 1e5;
    double cfl = 0.5;
};

/// Velocity divergence after projection, normalized by max|u| / h.
struct ProjectionReport {
    double divergence = 0.0;
};

/// Upwind advection, viscous diffusion, buoyancy and body forces on the
/// staggered velocity, followed by a pressure projection. The pressure
/// operator is factorized once at construction; the grid must outlive it.
class MomentumSolver {
public:
    MomentumSolver(const Grid& g, const MaterialProps& props, MomentumSettings settings)
        : grid_(&g),
          props_(props),
          settings_(settings),
          pressure_(g, LaplacianBc{FaceBc::Dirichlet, FaceBc::Neumann}) {
        const FaceVelocity shape(g);
        for (int d = 0; d < 3; ++d) {
            cells_[d].resize(shape.count(d));
            active_[d].resize(shape.count(d));
            pinned_[d].resize(shape.count(d));
            for (int k = 0; k < shape.face_extent(d, 2); ++k)
                for (int j = 0; j < shape.face_extent(d, 1); ++j)
                    for (int i = 0; i < shape.face_extent(d, 0); ++i) {
                        const std::size_t f = shape.index(d, i, j, k);
                        cells_[d][f] = face_cells(g, d, i, j, k);
                        active_[d][f] = face_active(g, cells_[d][f]);
                        const auto& fc = cells_[d][f];
                        pinned_[d][f] = fc.lo >= 0 && fc.hi >= 0 && g.solid(static_cast<std::size_t>(fc.lo)) &&
                                        g.solid(static_cast<std::size_t>(fc.hi));
                    }
        }
    }

    const MomentumSettings& settings() const noexcept { return settings_; }

    /// Largest stable step for the current velocity (CFL and viscous bounds).
    double dt_limit(const FaceVelocity& u) const {
        const Grid& g = *grid_;
        const double nu = props_.kinematic_viscosity();
        double s = 4.0 / (g.dx() * g.dx()) + 4.0 / (g.dy() * g.dy());
        if (g.nz() > 1) s += 4.0 / (g.dz() * g.dz());
        double limit = 1.0 / (nu * s);
        const double umax = u.max_abs();
        if (umax > 0.0) limit = std::min(limit, settings_.cfl * g.min_spacing() / umax);
        return limit;
    }

    /// Advances state.u and state.p by dt. `forces.accel` is a cell
    /// acceleration (Lorentz force / rho0); state.rho feeds buoyancy.
    ProjectionReport step(FluidState& s, double dt, const CellForces& forces) const {
        const Grid& g = *grid_;
        const double limit = dt_limit(s.u);
        if (!(dt > 0.0) || dt > limit * (1.0 + 1e-12))
            throw TimeStepError("momentum step violates CFL/viscous bound", limit);
        const double nu = props_.kinematic_viscosity();
        const CellArrays uc = cell_velocity(g, s.u);
        FaceVelocity star = s.u;

        for (int d = 0; d < 3; ++d) {
            const int ex[3] = {s.u.face_extent(d, 0), s.u.face_extent(d, 1), s.u.face_extent(d, 2)};
            for (int k = 0; k < ex[2]; ++k)
                for (int j = 0; j < ex[1]; ++j)
                    for (int i = 0; i < ex[0]; ++i) {
                        const std::size_t f = s.u.index(d, i, j, k);
                        if (!active_[d][f]) continue;
                        const FaceCells& fc = cells_[d][f];
                        const double uf = s.u.component(d)[f];
                        double rate = 0.0;
                        for (int a = 0; a < 3; ++a) {
                            if (a == 2 && g.nz() == 1) continue;
                            const double h = g.spacing(a);
                            const double um = neighbour(s.u, d, i, j, k, a, -1, uf);
                            const double up = neighbour(s.u, d, i, j, k, a, +1, uf);
                            const double U = face_average(uc[a], fc);
                            rate -= U > 0.0 ? U * (uf - um) / h : U * (up - uf) / h;
                            rate += nu * (up - 2.0 * uf + um) / (h * h);
                        }
                        const double rho = face_average(s.rho, fc);
                        rate += (rho - props_.rho0) / props_.rho0 * settings_.gravity[d];
                        rate += face_average(forces.accel[d], fc);
                        if (d == 2) rate += settings_.axial_forcing / props_.rho0;
                        star.component(d)[f] = uf + dt * rate;
                    }
        }

        const std::vector<double> div = face_divergence(g, star);
        std::vector<double> rhs(g.fluid_count());
        for (std::size_t f = 0; f < rhs.size(); ++f) rhs[f] = div[g.fluid_cells()[f]];
        const std::vector<double> q = pressure_.solve(rhs);
        auto qcell = [&](long c) { return q[static_cast<std::size_t>(g.fluid_id(static_cast<std::size_t>(c)))]; };

        for (int d = 0; d < 3; ++d) {
            const double h = g.spacing(d);
            auto& comp = star.component(d);
            for (std::size_t f = 0; f < comp.size(); ++f) {
                if (!active_[d][f]) continue;
                const FaceCells& fc = cells_[d][f];
                double grad;
                if (fc.lo >= 0 && fc.hi >= 0) grad = fc.lo == fc.hi ? 0.0 : (qcell(fc.hi) - qcell(fc.lo)) / h;
                else if (fc.lo < 0) grad = qcell(fc.hi) / (0.5 * h);
                else grad = -qcell(fc.lo) / (0.5 * h);
                comp[f] -= grad;
            }
        }
        s.u = std::move(star);

        for (std::size_t c = 0; c < g.cell_count(); ++c) {
            if (g.solid(c)) {
                s.p[c] = 0.0;
                continue;
            }
            s.p[c] = settings_.p_ext + qcell(static_cast<long>(c)) * props_.rho0 / dt +
                     hydrostatic(props_, settings_.gravity, g.center(c));
        }

        ProjectionReport report;
        const double umax = s.u.max_abs();
        if (umax > 0.0) {
            double worst = 0.0;
            for (double v : face_divergence(g, s.u)) worst = std::max(worst, std::abs(v));
            report.divergence = worst * g.min_spacing() / umax;
        }
        if (!std::isfinite(report.divergence) || report.divergence > 1e-8)
            throw SolverError("pressure projection left a divergent velocity", report.divergence);
        return report;
    }

private:
    static double face_average(const std::vector<double>& cell, const FaceCells& fc) {
        if (fc.lo >= 0 && fc.hi >= 0) return 0.5 * (cell[static_cast<std::size_t>(fc.lo)] + cell[static_cast<std::size_t>(fc.hi)]);
        return cell[static_cast<std::size_t>(fc.lo >= 0 ? fc.lo : fc.hi)];
    }

    /// Value of component d at the face one step along `axis`, with ghost rules
    /// for walls (mirror along the face normal, zero gradient across it) and
    /// no-slip images inside solids.
    double neighbour(const FaceVelocity& u, int d, int i, int j, int k, int axis, int step, double self) const {
        int idx[3] = {i, j, k};
        idx[axis] += step;
        if (axis == 2) {
            idx[2] = grid_->wrap_z(idx[2]);
        } else if (idx[axis] < 0 || idx[axis] >= u.face_extent(d, axis)) {
            if (axis != d) return self;
            idx[axis] -= 2 * step;
        }
        const std::size_t f = u.index(d, idx[0], idx[1], idx[2]);
        if (pinned_[d][f]) return -self;
        return u.component(d)[f];
    }

    const Grid* grid_;
    MaterialProps props_;
    MomentumSettings settings_;
    CellLaplacian pressure_;
    std::array<std::vector<FaceCells>, 3> cells_;
    std::array<std::vector<bool>, 3> active_;
    std::array<std::vector<bool>, 3> pinned_;
};

}  // namespace mhdshred::mhdsim
