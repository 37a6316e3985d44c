#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/linalg/dense_matrix.hpp"

namespace mhdshred::eval {

using linalg::DenseMatrix;

/// Per-frame relative errors; frames whose truth norm is zero are flagged
/// and hold NaN.
struct ErrorSeries {
    std::vector<double> eps;
    std::vector<std::size_t> flagged;
};

/// eps_k = ||truth_k - recon_k|| / ||truth_k|| over all rows of every
/// component, for each frame (column) k.
inline ErrorSeries relative_l2_error(const std::vector<const DenseMatrix*>& truth,
                                     const std::vector<const DenseMatrix*>& recon) {
    if (truth.empty() || truth.size() != recon.size())
        throw DimensionError("relative_l2_error: component lists differ");
    const std::size_t frames = truth.front()->cols();
    for (std::size_t c = 0; c < truth.size(); ++c)
        if (truth[c]->rows() != recon[c]->rows() || truth[c]->cols() != frames || recon[c]->cols() != frames)
            throw DimensionError("relative_l2_error: truth and reconstruction shapes differ");
    ErrorSeries out;
    out.eps.assign(frames, 0.0);
    std::vector<double> num(frames, 0.0), den(frames, 0.0);
    for (std::size_t c = 0; c < truth.size(); ++c)
        for (std::size_t r = 0; r < truth[c]->rows(); ++r) {
            const auto t = truth[c]->row(r);
            const auto y = recon[c]->row(r);
            for (std::size_t k = 0; k < frames; ++k) {
                const double d = t[k] - y[k];
                num[k] += d * d;
                den[k] += t[k] * t[k];
            }
        }
    for (std::size_t k = 0; k < frames; ++k) {
        if (den[k] > 0.0) {
            out.eps[k] = std::sqrt(num[k] / den[k]);
        } else {
            out.eps[k] = std::numeric_limits<double>::quiet_NaN();
            out.flagged.push_back(k);
        }
    }
    return out;
}

inline ErrorSeries relative_l2_error(const DenseMatrix& truth, const DenseMatrix& recon) {
    return relative_l2_error(std::vector<const DenseMatrix*>{&truth}, std::vector<const DenseMatrix*>{&recon});
}

/// Whole-trajectory relative error ||truth - recon||_F / ||truth||_F.
inline double trajectory_error(const std::vector<const DenseMatrix*>& truth,
                               const std::vector<const DenseMatrix*>& recon) {
    double num = 0.0, den = 0.0;
    if (truth.size() != recon.size()) throw DimensionError("trajectory_error: component lists differ");
    for (std::size_t c = 0; c < truth.size(); ++c) {
        if (truth[c]->size() != recon[c]->size()) throw DimensionError("trajectory_error: shapes differ");
        for (std::size_t i = 0; i < truth[c]->size(); ++i) {
            const double d = truth[c]->data()[i] - recon[c]->data()[i];
            num += d * d;
            den += truth[c]->data()[i] * truth[c]->data()[i];
        }
    }
    return den > 0.0 ? std::sqrt(num / den) : std::numeric_limits<double>::quiet_NaN();
}

/// Pointwise |truth - recon| of one frame.
inline std::vector<double> residual_field(std::span<const double> truth, std::span<const double> recon) {
    if (truth.size() != recon.size()) throw DimensionError("residual_field: frame sizes differ");
    std::vector<double> r(truth.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::abs(truth[i] - recon[i]);
    return r;
}

inline std::vector<double> residual_field(const DenseMatrix& truth, const DenseMatrix& recon, std::size_t frame) {
    if (frame >= truth.cols() || frame >= recon.cols()) throw DimensionError("residual_field: frame out of range");
    return residual_field(std::span<const double>(truth.column(frame)), std::span<const double>(recon.column(frame)));
}

/// Max, mean and count over frames [first, end), ignoring NaN.
struct SeriesStats {
    double max = 0.0;
    double mean = 0.0;
    std::size_t count = 0;
};

inline SeriesStats series_stats(const std::vector<double>& v, std::size_t first = 0) {
    SeriesStats s;
    double sum = 0.0;
    for (std::size_t k = first; k < v.size(); ++k) {
        if (std::isnan(v[k])) continue;
        s.max = s.count == 0 ? v[k] : std::max(s.max, v[k]);
        sum += v[k];
        ++s.count;
    }
    s.mean = s.count ? sum / static_cast<double>(s.count) : std::numeric_limits<double>::quiet_NaN();
    if (s.count == 0) s.max = std::numeric_limits<double>::quiet_NaN();
    return s;
}

struct ParamMetrics {
    double rmse_full = 0.0;
    double rmse_post = 0.0;
    double max_dev_post = 0.0;
    std::size_t burn_in = 0;
};

/// RMSE of an estimated drive series over the whole window and after the
/// burn-in, plus the largest deviation after the burn-in. Both series must be
/// on the same (normalized) scale.
inline ParamMetrics evaluate_param_estimation(const std::vector<double>& estimate, const std::vector<double>& truth,
                                              std::size_t burn_in) {
    if (estimate.empty()) throw ConfigurationError("no parameter estimate: the model has no parameter head");
    if (estimate.size() != truth.size()) throw DimensionError("parameter series lengths differ");
    if (burn_in >= estimate.size()) throw DimensionError("burn-in covers the whole series");
    ParamMetrics m;
    m.burn_in = burn_in;
    double full = 0.0, post = 0.0;
    for (std::size_t k = 0; k < estimate.size(); ++k) {
        const double d = estimate[k] - truth[k];
        full += d * d;
        if (k >= burn_in) {
            post += d * d;
            m.max_dev_post = std::max(m.max_dev_post, std::abs(d));
        }
    }
    m.rmse_full = std::sqrt(full / static_cast<double>(estimate.size()));
    m.rmse_post = std::sqrt(post / static_cast<double>(estimate.size() - burn_in));
    return m;
}

}  // namespace mhdshred::eval
