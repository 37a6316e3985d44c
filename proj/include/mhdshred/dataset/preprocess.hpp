#pragma once

#include <cmath>
#include <algorithm>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/linalg/dense_matrix.hpp"
#include "mhdshred/mhdsim/grid.hpp"
#include "mhdshred/mhdsim/params.hpp"

namespace mhdshred::dataset {

using linalg::DenseMatrix;
using mhdsim::Vec3;

/// p' = p - rho0 * (g . x) per cell, for every column of `p`.
inline DenseMatrix remove_hydrostatic(const DenseMatrix& p, double rho0, const Vec3& g, const std::vector<Vec3>& centers) {
    if (centers.size() != p.rows())
        throw DimensionError("remove_hydrostatic: " + std::to_string(centers.size()) + " coordinates for " +
                             std::to_string(p.rows()) + " rows");
    DenseMatrix out = p;
    for (std::size_t r = 0; r < p.rows(); ++r) {
        const double h = rho0 * mhdsim::dot(g, centers[r]);
        for (double& v : out.row(r)) v -= h;
    }
    return out;
}

/// Inverse of remove_hydrostatic.
inline DenseMatrix add_hydrostatic(const DenseMatrix& p, double rho0, const Vec3& g, const std::vector<Vec3>& centers) {
    return remove_hydrostatic(p, rho0, Vec3{-g[0], -g[1], -g[2]}, centers);
}

/// Column range of one trajectory inside a stacked matrix.
struct ColumnBlock {
    std::size_t trajectory = 0;
    std::size_t first = 0;
    std::size_t count = 0;
};

struct StackedMatrix {
    DenseMatrix X;
    std::vector<ColumnBlock> blocks;
};

/// X = [X1 | X2 | ...] with a map from trajectory index to its columns.
inline StackedMatrix stack_parametric(const std::vector<const DenseMatrix*>& trajectories) {
    if (trajectories.empty()) throw DimensionError("stack_parametric: no trajectories");
    const std::size_t rows = trajectories.front()->rows();
    std::size_t cols = 0;
    for (std::size_t t = 0; t < trajectories.size(); ++t) {
        if (trajectories[t]->rows() != rows)
            throw DimensionError("stack_parametric: trajectory " + std::to_string(t) + " has " +
                                 std::to_string(trajectories[t]->rows()) + " rows, expected " + std::to_string(rows));
        cols += trajectories[t]->cols();
    }
    StackedMatrix s{DenseMatrix(rows, cols), {}};
    std::size_t first = 0;
    for (std::size_t t = 0; t < trajectories.size(); ++t) {
        const DenseMatrix& b = *trajectories[t];
        for (std::size_t r = 0; r < rows; ++r) std::copy(b.row(r).begin(), b.row(r).end(), s.X.row(r).begin() + first);
        s.blocks.push_back({t, first, b.cols()});
        first += b.cols();
    }
    return s;
}

inline std::vector<Vec3> default_sensor_positions() {
    return {{0.0070, 0.0014, 0.0617}, {0.0051, -0.0018, 0.0564}, {-0.0027, 0.0045, 0.0066}};
}

/// Sensor coordinates and the fluid rows they resolve to. Sensors observe temperature.
struct SensorSpec {
    std::vector<Vec3> positions = default_sensor_positions();
    std::vector<std::size_t> cells;  // linear grid index
    std::vector<std::size_t> rows;   // fluid-row index into snapshot matrices
    std::string field = "T";

    std::size_t size() const noexcept { return positions.size(); }
    bool resolved() const noexcept { return rows.size() == positions.size(); }
};

/// Containing cell when it is fluid, otherwise the closest fluid face
/// neighbour. Throws SensorPlacementError when neither exists or two sensors
/// share a cell.
inline SensorSpec resolve_sensors(const mhdsim::Grid& g, SensorSpec spec) {
    spec.cells.clear();
    spec.rows.clear();
    const double half = 0.5 * g.geometry().side;
    std::set<std::size_t> used;
    for (std::size_t s = 0; s < spec.positions.size(); ++s) {
        const Vec3& x = spec.positions[s];
        const std::string tag = "sensor " + std::to_string(s + 1);
        int idx[3];
        const double lo[3] = {-half, -half, 0.0};
        for (int a = 0; a < 3; ++a) {
            const double u = (x[a] - lo[a]) / g.spacing(a);
            if (!std::isfinite(u) || u < 0.0 || u > g.extent(a))
                throw SensorPlacementError(tag + " lies outside the domain");
            idx[a] = std::min(static_cast<int>(u), g.extent(a) - 1);
        }
        std::size_t cell = g.index(idx[0], idx[1], idx[2]);
        if (g.solid(cell)) {
            double best = std::numeric_limits<double>::infinity();
            bool found = false;
            for (int a = 0; a < 3; ++a)
                for (int sgn : {-1, 1}) {
                    int c[3] = {idx[0], idx[1], idx[2]};
                    c[a] += sgn;
                    if (a == 2) c[2] = g.wrap_z(c[2]);
                    else if (c[a] < 0 || c[a] >= g.extent(a)) continue;
                    const std::size_t nb = g.index(c[0], c[1], c[2]);
                    if (g.solid(nb)) continue;
                    const Vec3 ctr = g.center(nb);
                    double d2 = 0.0;
                    for (int b = 0; b < 3; ++b) d2 += (ctr[b] - x[b]) * (ctr[b] - x[b]);
                    if (d2 < best) {
                        best = d2;
                        cell = nb;
                        found = true;
                    }
                }
            if (!found) throw SensorPlacementError(tag + " lies in the pipe with no fluid neighbour");
        }
        if (!used.insert(cell).second) throw SensorPlacementError(tag + " resolves to a cell already used");
        spec.cells.push_back(cell);
        spec.rows.push_back(static_cast<std::size_t>(g.fluid_id(cell)));
    }
    return spec;
}

/// Nt x n_sensors matrix of the observed field (rows are cells, columns frames).
inline DenseMatrix extract_sensor_series(const DenseMatrix& field, const SensorSpec& spec) {
    if (!spec.resolved()) throw SensorPlacementError("sensors have not been resolved");
    DenseMatrix out(field.cols(), spec.size());
    for (std::size_t s = 0; s < spec.size(); ++s) {
        if (spec.rows[s] >= field.rows()) throw DimensionError("sensor row outside the snapshot matrix");
        for (std::size_t k = 0; k < field.cols(); ++k) out(k, s) = field(spec.rows[s], k);
    }
    return out;
}

/// One training sample: the window ending at `frame` and that frame's target.
struct LaggedSample {
    DenseMatrix input;            // lag x n_sensors
    std::vector<double> target;   // empty when no targets supplied
    std::size_t trajectory = 0;
    std::size_t frame = 0;
};

/// Windows over frames [k - lag + 1, k], front-padded with frame 0.
/// `series` is Nt x n_sensors; `targets` is Nt x m or empty.
inline std::vector<LaggedSample> build_lagged_sequences(const DenseMatrix& series, const DenseMatrix& targets,
                                                        std::size_t lag = 30, std::size_t trajectory = 0) {
    if (lag == 0) throw DimensionError("build_lagged_sequences: lag must be positive");
    if (!targets.empty() && targets.rows() != series.rows())
        throw DimensionError("build_lagged_sequences: " + std::to_string(targets.rows()) + " targets for " +
                             std::to_string(series.rows()) + " frames");
    std::vector<LaggedSample> out;
    out.reserve(series.rows());
    for (std::size_t k = 0; k < series.rows(); ++k) {
        LaggedSample s{DenseMatrix(lag, series.cols()), {}, trajectory, k};
        for (std::size_t w = 0; w < lag; ++w) {
            const std::size_t back = lag - 1 - w;
            const std::size_t src = k >= back ? k - back : 0;
            std::copy(series.row(src).begin(), series.row(src).end(), s.input.row(w).begin());
        }
        if (!targets.empty()) s.target.assign(targets.row(k).begin(), targets.row(k).end());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace mhdshred::dataset
