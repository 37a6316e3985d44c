#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/mhdsim/grid.hpp"

namespace mhdshred::mhdsim {

enum class FaceBc { Neumann, Dirichlet };

/// Boundary treatment for a cell-centred Laplacian on the fluid cells.
/// Dirichlet values are zero and sit on the face (half a cell away).
struct LaplacianBc {
    FaceBc walls = FaceBc::Dirichlet;
    FaceBc solids = FaceBc::Neumann;
};

/// Face directions of a cell: -x, +x, -y, +y, -z, +z.
inline constexpr int kFaceAxis[6] = {0, 0, 1, 1, 2, 2};
inline constexpr int kFaceSign[6] = {-1, 1, -1, 1, -1, 1};

/// Neighbour across a cell face: a fluid id, or one of the markers below.
inline constexpr int kLinkDirichlet = -1;
inline constexpr int kLinkNone = -2;

/// Five/seven-point Laplacian over fluid cells, factorized once.
class CellLaplacian {
public:
    CellLaplacian(const Grid& grid, LaplacianBc bc) : grid_(&grid), bc_(bc) {
        const std::size_t n = grid.fluid_count();
        links_.resize(n);
        weights_.resize(n);
        bool any_dirichlet = false;
        for (std::size_t f = 0; f < n; ++f) {
            int i, j, k;
            grid.ijk(grid.fluid_cells()[f], i, j, k);
            for (int dir = 0; dir < 6; ++dir) {
                const int axis = kFaceAxis[dir];
                const double h = grid.spacing(axis);
                int nb[3] = {i, j, k};
                nb[axis] += kFaceSign[dir];
                int& link = links_[f][dir];
                double& w = weights_[f][dir];
                if (axis == 2) {
                    nb[2] = grid.wrap_z(nb[2]);
                    if (grid.nz() == 1) {
                        link = kLinkNone;
                        w = 0.0;
                        continue;
                    }
                }
                const bool outside = nb[axis] < 0 || nb[axis] >= grid.extent(axis);
                const FaceBc boundary = outside ? bc.walls : bc.solids;
                if (outside || grid.solid(nb[0], nb[1], nb[2])) {
                    link = boundary == FaceBc::Dirichlet ? kLinkDirichlet : kLinkNone;
                    w = boundary == FaceBc::Dirichlet ? 2.0 / (h * h) : 0.0;
                    any_dirichlet = any_dirichlet || boundary == FaceBc::Dirichlet;
                } else {
                    link = grid.fluid_id(grid.index(nb[0], nb[1], nb[2]));
                    w = 1.0 / (h * h);
                }
            }
        }
        pinned_ = !any_dirichlet;
        factorize();
    }

    const Grid& grid() const noexcept { return *grid_; }
    LaplacianBc bc() const noexcept { return bc_; }
    /// True when the operator has a constant null space and unknown 0 is pinned.
    bool pinned() const noexcept { return pinned_; }
    int link(std::size_t fluid, int dir) const noexcept { return links_[fluid][dir]; }

    /// y = L x on fluid unknowns.
    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(x.size(), 0.0);
        for (std::size_t f = 0; f < x.size(); ++f) {
            double acc = 0.0;
            for (int dir = 0; dir < 6; ++dir) {
                const int l = links_[f][dir];
                if (l >= 0) acc += weights_[f][dir] * (x[static_cast<std::size_t>(l)] - x[f]);
                else if (l == kLinkDirichlet) acc -= weights_[f][dir] * x[f];
            }
            y[f] = acc;
        }
        return y;
    }

    /// Solves L x = rhs. Raises SolverError if the residual check fails.
    std::vector<double> solve(const std::vector<double>& rhs, double tolerance = 1e-8) const {
        const std::size_t n = grid_->fluid_count();
        if (rhs.size() != n) throw DimensionError("CellLaplacian::solve: rhs size mismatch");
        std::vector<double> x(n, 0.0);
        if (n == 0) return x;
        const std::size_t off = pinned_ ? 1 : 0;
        Eigen::VectorXd b(static_cast<Eigen::Index>(n - off));
        for (std::size_t f = off; f < n; ++f) b[static_cast<Eigen::Index>(f - off)] = -rhs[f];
        const Eigen::VectorXd sol = b.size() ? Eigen::VectorXd(ldlt_.solve(b)) : Eigen::VectorXd();
        for (std::size_t f = off; f < n; ++f) x[f] = sol[static_cast<Eigen::Index>(f - off)];

        const auto lx = apply(x);
        double res = 0.0, scale = 0.0;
        for (std::size_t f = off; f < n; ++f) {
            res = std::max(res, std::abs(lx[f] - rhs[f]));
            scale = std::max(scale, std::abs(rhs[f]));
        }
        if (!std::isfinite(res) || res > tolerance * scale)
            throw SolverError("cell Poisson solve failed", scale > 0.0 ? res / scale : res);
        return x;
    }

private:
    void factorize() {
        const std::size_t n = grid_->fluid_count();
        const std::size_t off = pinned_ ? 1 : 0;
        if (n <= off) return;
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(7 * n);
        for (std::size_t f = off; f < n; ++f) {
            double diag = 0.0;
            for (int dir = 0; dir < 6; ++dir) {
                const int l = links_[f][dir];
                const double w = weights_[f][dir];
                if (l >= 0) {
                    diag += w;
                    if (static_cast<std::size_t>(l) >= off)
                        trips.emplace_back(static_cast<int>(f - off), static_cast<int>(static_cast<std::size_t>(l) - off), -w);
                } else if (l == kLinkDirichlet) {
                    diag += w;
                }
            }
            trips.emplace_back(static_cast<int>(f - off), static_cast<int>(f - off), diag);
        }
        Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(n - off), static_cast<Eigen::Index>(n - off));
        a.setFromTriplets(trips.begin(), trips.end());
        ldlt_.compute(a);
        if (ldlt_.info() != Eigen::Success) throw SolverError("cell Poisson factorization failed", 0.0);
    }

    const Grid* grid_;
    LaplacianBc bc_;
    bool pinned_ = false;
    std::vector<std::array<int, 6>> links_;
    std::vector<std::array<double, 6>> weights_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

}  // namespace mhdshred::mhdsim
