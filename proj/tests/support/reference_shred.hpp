#pragma once

// Independent scalar implementation of the network loss in long double, used
// as the finite-difference oracle for the analytic gradients. Central
// differences of a double-precision loss at eps = 1e-6 carry rounding noise
// of about 1e-16 |y| / eps, which is comparable to 1e-5 of small gradient
// components; the extended-precision loss removes that noise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mhdshred/shred/model.hpp"

namespace mhdshred::testing {

using LVec = std::vector<long double>;

/// Loss of `m` on (x, target) with tensor `k`, entry `i` shifted by `delta`.
inline long double reference_loss(const shred::ShredModel& m, const shred::Window& x, const shred::Mat& target,
                                  std::size_t k = 0, Eigen::Index i = -1, long double delta = 0.0L) {
    auto w = [&](std::size_t t, Eigen::Index r, Eigen::Index c) -> long double {
        const auto& M = m.tensors[t];
        const Eigen::Index flat = c * M.rows() + r;
        return static_cast<long double>(M(r, c)) + (t == k && flat == i ? delta : 0.0L);
    };
    auto sigmoid = [](long double a) { return 1.0L / (1.0L + std::exp(-a)); };
    const std::size_t H = m.arch.hidden;
    const Eigen::Index batch = x.front().cols();
    long double sum = 0.0L;
    for (Eigen::Index b = 0; b < batch; ++b) {
        std::vector<LVec> seq(x.size());
        for (std::size_t t = 0; t < x.size(); ++t)
            for (Eigen::Index j = 0; j < x[t].rows(); ++j) seq[t].push_back(x[t](j, b));
        for (std::size_t l = 0; l < m.arch.layers; ++l) {
            const std::size_t Wt = 2 * l, bt = 2 * l + 1;
            LVec h(H, 0.0L), c(H, 0.0L);
            for (std::size_t t = 0; t < seq.size(); ++t) {
                LVec xh = seq[t];
                xh.insert(xh.end(), h.begin(), h.end());
                LVec a(4 * H);
                for (std::size_t r = 0; r < 4 * H; ++r) {
                    long double s = w(bt, static_cast<Eigen::Index>(r), 0);
                    for (std::size_t q = 0; q < xh.size(); ++q)
                        s += w(Wt, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) * xh[q];
                    a[r] = s;
                }
                for (std::size_t j = 0; j < H; ++j) {
                    const long double ig = sigmoid(a[j]), fg = sigmoid(a[H + j]), og = sigmoid(a[2 * H + j]);
                    const long double gg = std::tanh(a[3 * H + j]);
                    c[j] = fg * c[j] + ig * gg;
                    h[j] = og * std::tanh(c[j]);
                }
                seq[t] = h;
            }
        }
        LVec act = seq.back();
        const std::size_t layers = m.decoder_layers();
        for (std::size_t d = 0; d < layers; ++d) {
            const std::size_t Wt = 2 * m.arch.layers + 2 * d, bt = Wt + 1;
            const auto rows = m.tensors[Wt].rows();
            LVec z(static_cast<std::size_t>(rows));
            for (Eigen::Index r = 0; r < rows; ++r) {
                long double s = w(bt, r, 0);
                for (std::size_t q = 0; q < act.size(); ++q) s += w(Wt, r, static_cast<Eigen::Index>(q)) * act[q];
                const bool hidden_layer = d + 1 < layers;
                z[static_cast<std::size_t>(r)] =
                    hidden_layer && m.arch.activation == shred::Activation::ReLU ? std::max(s, 0.0L) : s;
            }
            act = std::move(z);
        }
        for (std::size_t r = 0; r < act.size(); ++r) {
            const long double e = act[r] - static_cast<long double>(target(static_cast<Eigen::Index>(r), b));
            sum += e * e;
        }
    }
    return sum / static_cast<long double>(target.size());
}

struct GradientCheck {
    double worst = 0.0;  // largest relative error
    std::size_t checked = 0;
};

/// Compares the analytic gradients with central differences of the
/// extended-precision loss at step `eps`. Relative error is
/// |a - fd| / max(|a|, |fd|, floor).
inline GradientCheck check_gradients(const shred::ShredModel& m, const shred::Window& x, const shred::Mat& target,
                                     double eps = 1e-6, double floor = 1e-6) {
    shred::ForwardCache cache;
    const shred::Mat y = shred::forward(m, x, &cache);
    const auto grads = shred::backward(m, cache, y, target);
    GradientCheck out;
    for (std::size_t k = 0; k < m.tensors.size(); ++k)
        for (Eigen::Index i = 0; i < m.tensors[k].size(); ++i) {
            const long double lp = reference_loss(m, x, target, k, i, eps);
            const long double lm = reference_loss(m, x, target, k, i, -static_cast<long double>(eps));
            const double fd = static_cast<double>((lp - lm) / (2.0L * eps));
            const double an = grads[k].data()[i];
            out.worst = std::max(out.worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor}));
            ++out.checked;
        }
    return out;
}

}  // namespace mhdshred::testing
