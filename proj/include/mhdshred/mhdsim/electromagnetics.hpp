#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/mhdsim/fields.hpp"
#include "mhdshred/mhdsim/grid.hpp"
#include "mhdshred/mhdsim/params.hpp"
#include "mhdshred/mhdsim/poisson.hpp"
#include "mhdshred/mhdsim/state.hpp"

namespace mhdshred::mhdsim {

using CellArrays = std::array<std::vector<double>, 3>;

namespace detail {

inline Vec3 central_curl(const Grid& g, const CellVectorField& f, int i, int j, int k) {
    const double ix = 0.5 / g.dx(), iy = 0.5 / g.dy(), iz = 0.5 / g.dz();
    auto d = [&](int comp, int axis) {
        int p[3] = {i, j, k}, m[3] = {i, j, k};
        ++p[axis];
        --m[axis];
        const double inv = axis == 0 ? ix : axis == 1 ? iy : iz;
        return (f(comp, p[0], p[1], p[2]) - f(comp, m[0], m[1], m[2])) * inv;
    };
    return {d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)};
}

inline void require_finite(const CellVectorField& f, const char* who) {
    if (!f.interior_finite()) throw NumericError(std::string(who) + ": non-finite field");
}

}  // namespace detail

/// Central-difference curl on interior cells. Ghosts of `f` must be filled.
inline CellVectorField curl(const Grid& g, const CellVectorField& f) {
    CellVectorField out(g);
    f.for_interior([&](int i, int j, int k) { out.set(i, j, k, detail::central_curl(g, f, i, j, k)); });
    return out;
}

/// (1/mu_B)(curl B) x B in N/m^3.
inline CellVectorField lorentz_force(const Grid& g, const CellVectorField& B, double mu_B) {
    detail::require_finite(B, "lorentz_force");
    CellVectorField out(g);
    B.for_interior([&](int i, int j, int k) {
        const Vec3 c = detail::central_curl(g, B, i, j, k);
        const Vec3 f = cross(c, B.get(i, j, k));
        out.set(i, j, k, {f[0] / mu_B, f[1] / mu_B, f[2] / mu_B});
    });
    return out;
}

/// |curl B|^2 / (sigma mu_B^2) in W/m^3, one value per cell.
inline std::vector<double> joule_heating(const Grid& g, const CellVectorField& B, double sigma_el, double mu_B) {
    detail::require_finite(B, "joule_heating");
    std::vector<double> q(g.cell_count(), 0.0);
    B.for_interior([&](int i, int j, int k) {
        const Vec3 c = detail::central_curl(g, B, i, j, k);
        q[g.index(i, j, k)] = dot(c, c) / (sigma_el * mu_B * mu_B);
    });
    return q;
}

/// Central-difference divergence on interior cells. Ghosts must be filled.
inline std::vector<double> divergence(const Grid& g, const CellVectorField& B) {
    std::vector<double> div(g.cell_count(), 0.0);
    B.for_interior([&](int i, int j, int k) {
        div[g.index(i, j, k)] = 0.5 * ((B(0, i + 1, j, k) - B(0, i - 1, j, k)) / g.dx() +
                                       (B(1, i, j + 1, k) - B(1, i, j - 1, k)) / g.dy() +
                                       (B(2, i, j, k + 1) - B(2, i, j, k - 1)) / g.dz());
    });
    return div;
}

/// max |div B| h / max |B|; zero for a zero field.
inline double normalized_divergence(const Grid& g, const CellVectorField& B) {
    const double bmax = B.max_magnitude();
    if (bmax == 0.0) return 0.0;
    double worst = 0.0;
    for (double v : divergence(g, B)) worst = std::max(worst, std::abs(v));
    return worst * g.min_spacing() / bmax;
}

/// Removes the gradient part of B so that the central divergence vanishes.
/// Fixed axes treat the deviation from the wall value as zero outside the
/// domain; periodic axes wrap. Returns B with ghosts filled from `spec`.
inline CellVectorField clean_divergence(const Grid& g, CellVectorField B, const GhostSpec& spec,
                                        double target = 1e-12) {
    for (auto r : spec.rule)
        if (r != GhostRule::Fixed && r != GhostRule::Periodic)
            throw ConfigurationError("clean_divergence supports fixed or periodic ghosts only");
    detail::require_finite(B, "clean_divergence");
    fill_ghosts(B, spec);
    const double bmax = B.max_magnitude();
    const double h = g.min_spacing();
    if (bmax == 0.0) return B;

    const int n[3] = {g.nx(), g.ny(), g.nz()};
    const auto N = static_cast<Eigen::Index>(g.cell_count());
    // Neighbour of cell c along an axis, or -1 when it falls on a fixed wall.
    auto neighbour = [&](int i, int j, int k, int axis, int step) -> long {
        int c[3] = {i, j, k};
        c[axis] += step;
        if (c[axis] < 0 || c[axis] >= n[axis]) {
            if (spec.rule[axis] != GhostRule::Periodic) return -1;
            c[axis] = (c[axis] + n[axis]) % n[axis];
        }
        return static_cast<long>(g.index(c[0], c[1], c[2]));
    };

    // G maps a cell scalar to its central gradient (row 3c + a). The divergence
    // operator with these ghosts is -G^T, so cleaning solves G^T G phi = -div B.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(6 * g.cell_count());
    B.for_interior([&](int i, int j, int k) {
        const auto c = static_cast<Eigen::Index>(g.index(i, j, k));
        for (int a = 0; a < 3; ++a) {
            const double w = 0.5 / g.spacing(a);
            const long p = neighbour(i, j, k, a, 1), m = neighbour(i, j, k, a, -1);
            if (p >= 0) trips.emplace_back(3 * c + a, p, w);
            if (m >= 0) trips.emplace_back(3 * c + a, m, -w);
        }
    });
    Eigen::SparseMatrix<double> G(3 * N, N);
    G.setFromTriplets(trips.begin(), trips.end());
    const std::vector<double> div = divergence(g, B);
    const Eigen::Map<const Eigen::VectorXd> dv(div.data(), N);
    const double goal = target * bmax / h;
    if (dv.lpNorm<Eigen::Infinity>() <= goal) return B;

    const Eigen::SparseMatrix<double> A = Eigen::SparseMatrix<double>(G.transpose()) * G;
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setMaxIterations(20 * N + 100);
    cg.setTolerance(std::max(goal / dv.norm(), 1e-15));
    cg.compute(A);
    const Eigen::VectorXd phi = cg.solve(-dv);
    const Eigen::VectorXd grad = G * phi;
    B.for_interior([&](int i, int j, int k) {
        const auto c = static_cast<Eigen::Index>(g.index(i, j, k));
        for (int a = 0; a < 3; ++a) B(a, i, j, k) -= grad[3 * c + a];
    });
    fill_ghosts(B, spec);
    double residual = 0.0;
    for (double v : divergence(g, B)) residual = std::max(residual, std::abs(v));
    if (!std::isfinite(residual) || residual > 100.0 * goal)
        throw SolverError("divergence cleaning did not converge", residual * h / bmax);
    return B;
}

/// Explicit stability bound of the resistive term.
inline double induction_dt_limit(const Grid& g, double eta) {
    double s = 1.0 / (g.dx() * g.dx()) + 1.0 / (g.dy() * g.dy());
    if (g.nz() > 1) s += 1.0 / (g.dz() * g.dz());
    return 1.0 / (2.0 * eta * s);
}

/// One explicit step of dB/dt = curl(u x B) + eta lap B followed by cleaning.
/// `B` must carry ghosts filled from `spec`; `u_cell` holds cell velocities.
inline CellVectorField advance_induction(const Grid& g, const CellVectorField& B, const CellArrays& u_cell, double dt,
                                         double eta, const GhostSpec& spec) {
    const double limit = induction_dt_limit(g, eta);
    if (!(dt > 0.0) || dt > limit) throw TimeStepError("induction step exceeds resistive stability bound", 0.9 * limit);
    detail::require_finite(B, "step_induction");

    CellVectorField E(g);
    E.for_interior([&](int i, int j, int k) {
        const std::size_t c = g.index(i, j, k);
        E.set(i, j, k, cross({u_cell[0][c], u_cell[1][c], u_cell[2][c]}, B.get(i, j, k)));
    });
    GhostSpec copy = spec;
    GhostSpec mirror = spec;
    for (int a = 0; a < 3; ++a) {
        if (spec.rule[a] != GhostRule::Periodic) copy.rule[a] = GhostRule::Copy;
        if (spec.rule[a] == GhostRule::Fixed) mirror.rule[a] = GhostRule::Mirror;
    }
    fill_ghosts(E, copy);
    CellVectorField Bm = B;
    fill_ghosts(Bm, mirror);

    const double wx = 1.0 / (g.dx() * g.dx()), wy = 1.0 / (g.dy() * g.dy()), wz = 1.0 / (g.dz() * g.dz());
    CellVectorField out(g);
    B.for_interior([&](int i, int j, int k) {
        const Vec3 ce = detail::central_curl(g, E, i, j, k);
        Vec3 v = B.get(i, j, k);
        for (int d = 0; d < 3; ++d) {
            const double b = Bm(d, i, j, k);
            double lap = wx * (Bm(d, i + 1, j, k) - 2.0 * b + Bm(d, i - 1, j, k)) +
                         wy * (Bm(d, i, j + 1, k) - 2.0 * b + Bm(d, i, j - 1, k));
            if (g.nz() > 1) lap += wz * (Bm(d, i, j, k + 1) - 2.0 * b + Bm(d, i, j, k - 1));
            v[d] += dt * (ce[d] + eta * lap);
        }
        out.set(i, j, k, v);
    });
    return clean_divergence(g, std::move(out), spec);
}

/// Advances the magnetic field of `state` by dt. Quasi-static mode returns
/// the drive value at the new time on every cell.
inline CellVectorField step_induction(const Grid& g, const FluidState& state, double dt, const MaterialProps& props,
                                      InductionMode mode, const MagneticDrive& drive) {
    const Vec3 b0 = drive.value(state.time + dt);
    if (mode == InductionMode::QuasiStatic) {
        CellVectorField out(g, b0);
        return out;
    }
    const GhostSpec spec{{GhostRule::Fixed, GhostRule::Fixed, GhostRule::Periodic}, b0};
    CellVectorField B = state.B;
    fill_ghosts(B, spec);
    return advance_induction(g, B, cell_velocity(g, state.u), dt, props.magnetic_diffusivity(), spec);
}

/// Electric boundary condition on the outer duct walls.
enum class ElectricWalls { Insulating, Conducting };

/// Body forces on cells: acceleration (m/s^2) and volumetric heating (W/m^3).
struct CellForces {
    CellArrays accel;
    std::vector<double> heat;
    CellArrays current;
};

inline CellForces zero_forces(const Grid& g) {
    CellForces f;
    for (int d = 0; d < 3; ++d) {
        f.accel[d].assign(g.cell_count(), 0.0);
        f.current[d].assign(g.cell_count(), 0.0);
    }
    f.heat.assign(g.cell_count(), 0.0);
    return f;
}

/// Inductionless current J = sigma(-grad phi + u x B0) with div J = 0. The
/// pipe is a perfect conductor (phi = 0); the outer walls are insulating or
/// perfectly conducting.
class QuasiStaticCurrent {
public:
    QuasiStaticCurrent(const Grid& g, ElectricWalls walls = ElectricWalls::Insulating)
        : grid_(&g),
          walls_(walls),
          laplacian_(g, LaplacianBc{walls == ElectricWalls::Conducting ? FaceBc::Dirichlet : FaceBc::Neumann,
                                    FaceBc::Dirichlet}) {}

    ElectricWalls walls() const noexcept { return walls_; }

    /// Cell forces from cell velocities and a uniform applied field.
    CellForces compute(const CellArrays& u_cell, const Vec3& B0, const MaterialProps& props) const {
        const Grid& g = *grid_;
        CellForces out = zero_forces(g);
        if (B0[0] == 0.0 && B0[1] == 0.0 && B0[2] == 0.0) return out;
        const std::size_t nf = g.fluid_count();
        std::vector<Vec3> F(nf);
        for (std::size_t f = 0; f < nf; ++f) {
            const std::size_t c = g.fluid_cells()[f];
            F[f] = cross({u_cell[0][c], u_cell[1][c], u_cell[2][c]}, B0);
        }
        // Face value of (u x B0) and the kind of each face.
        auto face_flux = [&](std::size_t f, int dir) -> double {
            const int a = kFaceAxis[dir];
            const int l = laplacian_.link(f, dir);
            if (l >= 0) return 0.5 * (F[f][a] + F[static_cast<std::size_t>(l)][a]);
            switch (face_kind(f, dir)) {
                case Kind::Pipe: return 0.0;
                case Kind::Wall: return walls_ == ElectricWalls::Conducting ? F[f][a] : 0.0;
                default: return F[f][a];
            }
        };
        std::vector<double> rhs(nf, 0.0);
        for (std::size_t f = 0; f < nf; ++f) {
            double s = 0.0;
            for (int dir = 0; dir < 6; ++dir) s += kFaceSign[dir] * face_flux(f, dir) / g.spacing(kFaceAxis[dir]);
            rhs[f] = s;
        }
        const std::vector<double> phi = laplacian_.solve(rhs);

        const double sigma = props.sigma_el;
        for (std::size_t f = 0; f < nf; ++f) {
            const std::size_t c = g.fluid_cells()[f];
            Vec3 J = {0.0, 0.0, 0.0};
            for (int dir = 0; dir < 6; ++dir) {
                const int a = kFaceAxis[dir];
                const double h = g.spacing(a);
                const int l = laplacian_.link(f, dir);
                double grad = 0.0;
                bool insulated = false;
                if (l >= 0) {
                    grad = kFaceSign[dir] * (phi[static_cast<std::size_t>(l)] - phi[f]) / h;
                } else {
                    const Kind kind = face_kind(f, dir);
                    if (kind == Kind::Wall && walls_ == ElectricWalls::Insulating) insulated = true;
                    else if (kind != Kind::Self) grad = kFaceSign[dir] * (0.0 - phi[f]) / (0.5 * h);
                }
                if (!insulated) J[a] += 0.5 * sigma * (-grad + face_flux(f, dir));
            }
            const Vec3 a = cross(J, B0);
            for (int d = 0; d < 3; ++d) {
                out.current[d][c] = J[d];
                out.accel[d][c] = a[d] / props.rho0;
            }
            out.heat[c] = dot(J, J) / sigma;
        }
        return out;
    }

private:
    enum class Kind { Fluid, Pipe, Wall, Self };

    Kind face_kind(std::size_t f, int dir) const {
        const Grid& g = *grid_;
        const int a = kFaceAxis[dir];
        if (a == 2 && g.nz() == 1) return Kind::Self;
        int i, j, k;
        g.ijk(g.fluid_cells()[f], i, j, k);
        int nb[3] = {i, j, k};
        nb[a] += kFaceSign[dir];
        if (a == 2) nb[2] = g.wrap_z(nb[2]);
        if (nb[a] < 0 || nb[a] >= g.extent(a)) return Kind::Wall;
        return g.solid(nb[0], nb[1], nb[2]) ? Kind::Pipe : Kind::Fluid;
    }

    const Grid* grid_;
    ElectricWalls walls_;
    CellLaplacian laplacian_;
};

/// Forces from a resolved magnetic field (full induction mode).
inline CellForces resolved_field_forces(const Grid& g, const CellVectorField& B, const MaterialProps& props) {
    CellForces out = zero_forces(g);
    const CellVectorField f = lorentz_force(g, B, props.mu_B);
    const CellVectorField J = curl(g, B);
    for (std::size_t c = 0; c < g.cell_count(); ++c) {
        if (g.solid(c)) continue;
        int i, j, k;
        g.ijk(c, i, j, k);
        const Vec3 fc = f.get(i, j, k);
        const Vec3 jc = J.get(i, j, k);
        for (int d = 0; d < 3; ++d) {
            out.accel[d][c] = fc[d] / props.rho0;
            out.current[d][c] = jc[d] / props.mu_B;
        }
    }
    out.heat = joule_heating(g, B, props.sigma_el, props.mu_B);
    for (std::size_t c = 0; c < g.cell_count(); ++c)
        if (g.solid(c)) out.heat[c] = 0.0;
    return out;
}

}  // namespace mhdshred::mhdsim
