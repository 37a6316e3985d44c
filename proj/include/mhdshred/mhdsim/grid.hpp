#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mhdshred/mhdsim/params.hpp"

namespace mhdshred::mhdsim {

enum class CellKind : std::uint8_t { Fluid = 0, Solid = 1 };

/// Uniform Cartesian grid over [-a/2, a/2]^2 x [0, L], periodic in z.
/// Cell (i, j, k) has linear index i + nx (j + ny k).
class Grid {
public:
    Grid(const Geometry& g, std::vector<CellKind> mask)
        : geometry_(g), nx_(g.nx), ny_(g.ny), nz_(g.nz), mask_(std::move(mask)) {
        dx_ = g.side / nx_;
        dy_ = g.side / ny_;
        dz_ = g.length / nz_;
        if (mask_.size() != cell_count()) throw DimensionError("Grid: mask size mismatch");
        fluid_id_.assign(cell_count(), -1);
        for (std::size_t c = 0; c < cell_count(); ++c)
            if (mask_[c] == CellKind::Fluid) {
                fluid_id_[c] = static_cast<int>(fluid_cells_.size());
                fluid_cells_.push_back(c);
            }
    }

    const Geometry& geometry() const noexcept { return geometry_; }
    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    int nz() const noexcept { return nz_; }
    double dx() const noexcept { return dx_; }
    double dy() const noexcept { return dy_; }
    double dz() const noexcept { return dz_; }
    double spacing(int axis) const noexcept { return axis == 0 ? dx_ : axis == 1 ? dy_ : dz_; }
    int extent(int axis) const noexcept { return axis == 0 ? nx_ : axis == 1 ? ny_ : nz_; }
    double min_spacing() const noexcept { return nz_ == 1 ? std::min(dx_, dy_) : std::min({dx_, dy_, dz_}); }

    std::size_t cell_count() const noexcept { return static_cast<std::size_t>(nx_) * ny_ * nz_; }
    std::size_t index(int i, int j, int k) const noexcept {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx_) * (j + static_cast<std::size_t>(ny_) * k);
    }
    void ijk(std::size_t c, int& i, int& j, int& k) const noexcept {
        i = static_cast<int>(c % nx_);
        j = static_cast<int>((c / nx_) % ny_);
        k = static_cast<int>(c / (static_cast<std::size_t>(nx_) * ny_));
    }
    int wrap_z(int k) const noexcept { return ((k % nz_) + nz_) % nz_; }

    bool solid(int i, int j, int k) const noexcept { return mask_[index(i, j, wrap_z(k))] == CellKind::Solid; }
    bool solid(std::size_t c) const noexcept { return mask_[c] == CellKind::Solid; }
    const std::vector<CellKind>& mask() const noexcept { return mask_; }

    Vec3 center(int i, int j, int k) const noexcept {
        return {-0.5 * geometry_.side + (i + 0.5) * dx_, -0.5 * geometry_.side + (j + 0.5) * dy_, (k + 0.5) * dz_};
    }
    Vec3 center(std::size_t c) const noexcept {
        int i, j, k;
        ijk(c, i, j, k);
        return center(i, j, k);
    }

    std::size_t fluid_count() const noexcept { return fluid_cells_.size(); }
    const std::vector<std::size_t>& fluid_cells() const noexcept { return fluid_cells_; }
    int fluid_id(std::size_t c) const noexcept { return fluid_id_[c]; }
    std::size_t solid_count() const noexcept { return cell_count() - fluid_count(); }

private:
    Geometry geometry_;
    int nx_, ny_, nz_;
    double dx_ = 0, dy_ = 0, dz_ = 0;
    std::vector<CellKind> mask_;
    std::vector<int> fluid_id_;
    std::vector<std::size_t> fluid_cells_;
};

inline void check_resolution(const Geometry& g) {
    if (g.nx < 8 || g.ny < 8 || (g.nz < 8 && g.nz != 1))
        throw ConfigurationError("grid needs nx, ny >= 8 and nz >= 8 (or nz = 1 for the cross-section mode)");
    if (!(g.side > 0.0) || !(g.length > 0.0)) throw ConfigurationError("domain size must be positive");
}

/// Grid with an arbitrary solid mask given by a predicate on cell centers.
inline Grid build_masked_grid(const Geometry& g, const std::function<bool(const Vec3&)>& is_solid) {
    check_resolution(g);
    const double dx = g.side / g.nx, dy = g.side / g.ny, dz = g.length / g.nz;
    std::vector<CellKind> mask(static_cast<std::size_t>(g.nx) * g.ny * g.nz, CellKind::Fluid);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Vec3 c = {-0.5 * g.side + (i + 0.5) * dx, -0.5 * g.side + (j + 0.5) * dy, (k + 0.5) * dz};
                if (is_solid(c)) mask[static_cast<std::size_t>(i) + g.nx * (j + static_cast<std::size_t>(g.ny) * k)] = CellKind::Solid;
            }
    return Grid(g, std::move(mask));
}

/// Duct with the cooling pipe masked by staircase cells whose centers lie inside the pipe radius.
inline Grid build_grid(const Geometry& g) {
    check_resolution(g);
    if (g.pipe_radius < 0.0) throw ConfigurationError("pipe radius must be non-negative");
    if (g.pipe_radius >= 0.5 * g.side) throw ConfigurationError("pipe radius must be smaller than a/2");
    if (g.pipe_radius > 0.0) {
        const double cells_across = 2.0 * g.pipe_radius / std::max(g.side / g.nx, g.side / g.ny);
        if (cells_across < 4.0)
            throw ConfigurationError("pipe diameter spans " + std::to_string(cells_across) +
                                     " cells; at least 4 are required");
    }
    const double r2 = g.pipe_radius * g.pipe_radius;
    return build_masked_grid(g, [r2](const Vec3& c) { return c[0] * c[0] + c[1] * c[1] < r2; });
}

}  // namespace mhdshred::mhdsim
