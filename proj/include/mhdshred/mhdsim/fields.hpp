#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "mhdshred/mhdsim/grid.hpp"

namespace mhdshred::mhdsim {

/// Cell-centred vector field with one ghost layer on every side.
class CellVectorField {
public:
    CellVectorField() = default;
    CellVectorField(int nx, int ny, int nz, const Vec3& fill = {0.0, 0.0, 0.0}) : nx_(nx), ny_(ny), nz_(nz) {
        const std::size_t n = static_cast<std::size_t>(nx + 2) * (ny + 2) * (nz + 2);
        for (int d = 0; d < 3; ++d) comp_[d].assign(n, fill[d]);
    }
    explicit CellVectorField(const Grid& g, const Vec3& fill = {0.0, 0.0, 0.0})
        : CellVectorField(g.nx(), g.ny(), g.nz(), fill) {}

    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    int nz() const noexcept { return nz_; }

    /// i in [-1, nx], likewise j, k.
    std::size_t at(int i, int j, int k) const noexcept {
        return static_cast<std::size_t>(i + 1) +
               static_cast<std::size_t>(nx_ + 2) * (static_cast<std::size_t>(j + 1) + static_cast<std::size_t>(ny_ + 2) * (k + 1));
    }
    double& operator()(int d, int i, int j, int k) noexcept { return comp_[d][at(i, j, k)]; }
    double operator()(int d, int i, int j, int k) const noexcept { return comp_[d][at(i, j, k)]; }
    Vec3 get(int i, int j, int k) const noexcept {
        const auto a = at(i, j, k);
        return {comp_[0][a], comp_[1][a], comp_[2][a]};
    }
    void set(int i, int j, int k, const Vec3& v) noexcept {
        const auto a = at(i, j, k);
        for (int d = 0; d < 3; ++d) comp_[d][a] = v[d];
    }

    template <typename F>
    void for_interior(F&& f) const {
        for (int k = 0; k < nz_; ++k)
            for (int j = 0; j < ny_; ++j)
                for (int i = 0; i < nx_; ++i) f(i, j, k);
    }

    double max_magnitude() const {
        double m = 0.0;
        for_interior([&](int i, int j, int k) {
            const Vec3 v = get(i, j, k);
            m = std::max(m, std::sqrt(dot(v, v)));
        });
        return m;
    }

    bool interior_finite() const {
        bool ok = true;
        for_interior([&](int i, int j, int k) {
            const Vec3 v = get(i, j, k);
            ok = ok && std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
        });
        return ok;
    }

    friend bool operator==(const CellVectorField&, const CellVectorField&) = default;

private:
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::array<std::vector<double>, 3> comp_;
};

/// How ghost cells along one axis are filled.
enum class GhostRule {
    Periodic,  // copy from the opposite side
    Fixed,     // ghost = wall value
    Mirror,    // ghost = 2 wall - inner, so the face value equals the wall value
    Copy,      // ghost = inner (zero normal gradient)
};

struct GhostSpec {
    std::array<GhostRule, 3> rule = {GhostRule::Fixed, GhostRule::Fixed, GhostRule::Periodic};
    Vec3 wall_value = {0.0, 0.0, 0.0};

    static GhostSpec periodic() { return {{GhostRule::Periodic, GhostRule::Periodic, GhostRule::Periodic}, {}}; }
};

/// Axes are processed in order x, y, z and each pass includes the ghosts of
/// the previous ones, so edges and corners are filled consistently.
inline void fill_ghosts(CellVectorField& f, const GhostSpec& spec) {
    const int n[3] = {f.nx(), f.ny(), f.nz()};
    for (int axis = 0; axis < 3; ++axis) {
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        const int lo1 = axis > a1 ? -1 : 0, hi1 = axis > a1 ? n[a1] : n[a1] - 1;
        const int lo2 = axis > a2 ? -1 : 0, hi2 = axis > a2 ? n[a2] : n[a2] - 1;
        for (int s2 = lo2; s2 <= hi2; ++s2)
            for (int s1 = lo1; s1 <= hi1; ++s1) {
                int idx[3];
                auto cell = [&](int along) {
                    idx[axis] = along;
                    idx[a1] = s1;
                    idx[a2] = s2;
                    return std::array<int, 3>{idx[0], idx[1], idx[2]};
                };
                const auto g_lo = cell(-1), g_hi = cell(n[axis]);
                const auto in_lo = cell(0), in_hi = cell(n[axis] - 1);
                for (int d = 0; d < 3; ++d) {
                    double& lo = f(d, g_lo[0], g_lo[1], g_lo[2]);
                    double& hi = f(d, g_hi[0], g_hi[1], g_hi[2]);
                    const double vlo = f(d, in_lo[0], in_lo[1], in_lo[2]);
                    const double vhi = f(d, in_hi[0], in_hi[1], in_hi[2]);
                    const double wall = spec.wall_value[d];
                    switch (spec.rule[axis]) {
                        case GhostRule::Periodic: lo = vhi; hi = vlo; break;
                        case GhostRule::Fixed: lo = wall; hi = wall; break;
                        case GhostRule::Mirror: lo = 2.0 * wall - vlo; hi = 2.0 * wall - vhi; break;
                        case GhostRule::Copy: lo = vlo; hi = vhi; break;
                    }
                }
            }
    }
}

/// Staggered (MAC) velocity: u on x-faces, v on y-faces, w on z-faces.
/// x- and y-face arrays include both boundary faces; z-faces are periodic
/// with face k lying between cells k-1 and k.
class FaceVelocity {
public:
    FaceVelocity() = default;
    FaceVelocity(int nx, int ny, int nz) : nx_(nx), ny_(ny), nz_(nz) {
        for (int d = 0; d < 3; ++d) comp_[d].assign(count(d), 0.0);
    }
    explicit FaceVelocity(const Grid& g) : FaceVelocity(g.nx(), g.ny(), g.nz()) {}

    int face_extent(int d, int axis) const noexcept {
        const int n[3] = {nx_, ny_, nz_};
        return n[axis] + (axis == d && d != 2 ? 1 : 0);
    }
    std::size_t count(int d) const noexcept {
        return static_cast<std::size_t>(face_extent(d, 0)) * face_extent(d, 1) * face_extent(d, 2);
    }
    std::size_t index(int d, int i, int j, int k) const noexcept {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(face_extent(d, 0)) * (j + static_cast<std::size_t>(face_extent(d, 1)) * k);
    }
    double& operator()(int d, int i, int j, int k) noexcept { return comp_[d][index(d, i, j, k)]; }
    double operator()(int d, int i, int j, int k) const noexcept { return comp_[d][index(d, i, j, k)]; }
    std::vector<double>& component(int d) noexcept { return comp_[d]; }
    const std::vector<double>& component(int d) const noexcept { return comp_[d]; }

    double max_abs() const {
        double m = 0.0;
        for (const auto& c : comp_)
            for (double v : c) m = std::max(m, std::abs(v));
        return m;
    }

    friend bool operator==(const FaceVelocity&, const FaceVelocity&) = default;

private:
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::array<std::vector<double>, 3> comp_;
};

/// Cells on either side of a face; -1 where the face lies on an outer wall.
struct FaceCells {
    long lo = -1;
    long hi = -1;
};

inline FaceCells face_cells(const Grid& g, int d, int i, int j, int k) {
    FaceCells fc;
    int lo[3] = {i, j, k};
    lo[d] -= 1;
    if (d == 2) lo[2] = g.wrap_z(lo[2]);
    const int hi[3] = {i, j, d == 2 ? g.wrap_z(k) : k};
    auto valid = [&](const int* c) { return c[0] >= 0 && c[0] < g.nx() && c[1] >= 0 && c[1] < g.ny(); };
    if (valid(lo)) fc.lo = static_cast<long>(g.index(lo[0], lo[1], lo[2]));
    if (valid(hi)) fc.hi = static_cast<long>(g.index(hi[0], hi[1], hi[2]));
    return fc;
}

/// A face carries a free velocity unless it touches a solid cell.
inline bool face_active(const Grid& g, const FaceCells& fc) {
    return !(fc.lo >= 0 && g.solid(static_cast<std::size_t>(fc.lo))) &&
           !(fc.hi >= 0 && g.solid(static_cast<std::size_t>(fc.hi)));
}

/// Cell-centred velocity: average of the two faces in each direction.
inline std::array<std::vector<double>, 3> cell_velocity(const Grid& g, const FaceVelocity& u) {
    std::array<std::vector<double>, 3> out;
    for (int d = 0; d < 3; ++d) out[d].assign(g.cell_count(), 0.0);
    for (int k = 0; k < g.nz(); ++k)
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                const std::size_t c = g.index(i, j, k);
                if (g.solid(c)) continue;
                out[0][c] = 0.5 * (u(0, i, j, k) + u(0, i + 1, j, k));
                out[1][c] = 0.5 * (u(1, i, j, k) + u(1, i, j + 1, k));
                out[2][c] = 0.5 * (u(2, i, j, k) + u(2, i, j, g.wrap_z(k + 1)));
            }
    return out;
}

/// Discrete divergence per cell (fluid cells only; zero elsewhere).
inline std::vector<double> face_divergence(const Grid& g, const FaceVelocity& u) {
    std::vector<double> div(g.cell_count(), 0.0);
    for (int k = 0; k < g.nz(); ++k)
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                const std::size_t c = g.index(i, j, k);
                if (g.solid(c)) continue;
                div[c] = (u(0, i + 1, j, k) - u(0, i, j, k)) / g.dx() + (u(1, i, j + 1, k) - u(1, i, j, k)) / g.dy() +
                         (u(2, i, j, g.wrap_z(k + 1)) - u(2, i, j, k)) / g.dz();
            }
    return div;
}

}  // namespace mhdshred::mhdsim
