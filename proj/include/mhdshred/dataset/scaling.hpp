#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/linalg/dense_matrix.hpp"

namespace mhdshred::dataset {

using linalg::DenseMatrix;

/// Affine map x -> (x - min) / (max - min) for one named channel.
struct MinMax {
    std::string name;
    double min = 0.0;
    double max = 1.0;

    void check() const {
        if (!(max > min) || !std::isfinite(min) || !std::isfinite(max))
            throw ScalingError("degenerate scaling channel '" + name + "' (min " + format_double(min) + ", max " +
                               format_double(max) + ")");
    }
    double forward(double x) const { return (x - min) / (max - min); }
    double inverse(double y) const { return min + y * (max - min); }

    friend bool operator==(const MinMax&, const MinMax&) = default;
};

/// Extremes over every entry of the given matrices.
inline MinMax fit_minmax(const std::string& name, const std::vector<const DenseMatrix*>& blocks) {
    MinMax m{name, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto* b : blocks)
        for (double v : b->data()) {
            if (!std::isfinite(v)) throw DataError("non-finite value in channel '" + name + "'");
            m.min = std::min(m.min, v);
            m.max = std::max(m.max, v);
        }
    m.check();
    return m;
}

/// Extremes of one row (mode) across the given row-per-mode matrices.
inline MinMax fit_row_minmax(const std::string& name, const std::vector<const DenseMatrix*>& blocks, std::size_t row) {
    MinMax m{name, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto* b : blocks)
        for (double v : b->row(row)) {
            m.min = std::min(m.min, v);
            m.max = std::max(m.max, v);
        }
    m.check();
    return m;
}

inline DenseMatrix normalize_minmax(const DenseMatrix& x, const MinMax& s) {
    s.check();
    DenseMatrix y = x;
    for (double& v : y.data()) v = s.forward(v);
    return y;
}

inline DenseMatrix denormalize_minmax(const DenseMatrix& y, const MinMax& s) {
    s.check();
    DenseMatrix x = y;
    for (double& v : x.data()) v = s.inverse(v);
    return x;
}

/// All scaling channels of a dataset, in a fixed order.
struct ScalingParams {
    std::vector<MinMax> fields;
    std::vector<MinMax> latent;
    std::vector<MinMax> param;

    const MinMax& field(const std::string& name) const {
        for (const auto& f : fields)
            if (f.name == name) return f;
        throw ScalingError("no scaling for field '" + name + "'");
    }

    KeyValueDoc to_keyvalue() const {
        KeyValueDoc d;
        auto put = [&](const std::string& group, const std::vector<MinMax>& v) {
            d.set(group + ".count", v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                const std::string p = group + "." + std::to_string(i);
                d.set(p + ".name", v[i].name);
                d.set(p + ".min", v[i].min);
                d.set(p + ".max", v[i].max);
            }
        };
        put("field", fields);
        put("latent", latent);
        put("param", param);
        return d;
    }

    static ScalingParams from_keyvalue(const KeyValueDoc& d) {
        ScalingParams s;
        auto get = [&](const std::string& group, std::vector<MinMax>& v) {
            const auto n = static_cast<std::size_t>(d.get_int_or(group + ".count", 0));
            for (std::size_t i = 0; i < n; ++i) {
                const std::string p = group + "." + std::to_string(i);
                v.push_back({d.get(p + ".name"), d.get_double(p + ".min"), d.get_double(p + ".max")});
            }
        };
        get("field", s.fields);
        get("latent", s.latent);
        get("param", s.param);
        return s;
    }

    friend bool operator==(const ScalingParams&, const ScalingParams&) = default;
};

}  // namespace mhdshred::dataset
