#pragma once

// SHRED network: stacked LSTM encoder over a sensor window followed by a
// shallow fully connected decoder. Parameters are a flat list of tensors:
//   lstm<l>.W  4H x (in + H), gate rows ordered input, forget, output, candidate
//   lstm<l>.b  4H x 1
//   dec<k>.W   out x in
//   dec<k>.b   out x 1
// Batches are column-major: one column per sample.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mhdshred/dataset/bundle.hpp"
#include "mhdshred/dataset/scaling.hpp"
#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"

namespace mhdshred::shred {

using Mat = Eigen::MatrixXd;

enum class Activation { ReLU, Identity };

struct Architecture {
    std::size_t n_sensors = 3;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t lag = 30;
    std::vector<std::size_t> decoder = {350, 400};
    std::size_t output = 25;
    bool param_head = false;
    Activation activation = Activation::ReLU;
    double dropout = 0.0;

    void validate() const {
        if (n_sensors == 0 || hidden == 0 || layers == 0 || lag == 0 || output == 0)
            throw ConfigurationError("network widths, depth and lag must be positive");
        for (std::size_t w : decoder)
            if (w == 0) throw ConfigurationError("decoder widths must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigurationError("dropout must lie in [0, 1)");
    }

    /// Trainable parameters implied by the widths.
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layers; ++l) n += 4 * hidden * ((l == 0 ? n_sensors : hidden) + hidden + 1);
        std::size_t in = hidden;
        for (std::size_t w : decoder) {
            n += w * (in + 1);
            in = w;
        }
        return n + output * (in + 1);
    }

    KeyValueDoc to_keyvalue() const {
        KeyValueDoc d;
        d.set("arch.n_sensors", n_sensors);
        d.set("arch.hidden", hidden);
        d.set("arch.layers", layers);
        d.set("arch.lag", lag);
        std::string dec;
        for (std::size_t w : decoder) dec += (dec.empty() ? "" : ",") + std::to_string(w);
        d.set("arch.decoder", dec);
        d.set("arch.output", output);
        d.set("arch.param_head", param_head);
        d.set("arch.activation", std::string(activation == Activation::ReLU ? "relu" : "identity"));
        d.set("arch.dropout", dropout);
        return d;
    }

    static Architecture from_keyvalue(const KeyValueDoc& d) {
        Architecture a;
        a.n_sensors = static_cast<std::size_t>(d.get_int("arch.n_sensors"));
        a.hidden = static_cast<std::size_t>(d.get_int("arch.hidden"));
        a.layers = static_cast<std::size_t>(d.get_int("arch.layers"));
        a.lag = static_cast<std::size_t>(d.get_int("arch.lag"));
        a.decoder.clear();
        std::stringstream ss(d.get("arch.decoder"));
        std::string w;
        while (std::getline(ss, w, ','))
            if (!w.empty()) a.decoder.push_back(static_cast<std::size_t>(std::stoull(w)));
        a.output = static_cast<std::size_t>(d.get_int("arch.output"));
        a.param_head = d.get_bool_or("arch.param_head", false);
        const std::string act = d.get("arch.activation");
        if (act != "relu" && act != "identity") throw FormatError("unknown activation '" + act + "'");
        a.activation = act == "relu" ? Activation::ReLU : Activation::Identity;
        a.dropout = d.get_double_or("arch.dropout", 0.0);
        a.validate();
        return a;
    }
};

struct ShredModel {
    Architecture arch;
    std::vector<Mat> tensors;
    std::vector<std::string> names;
    /// Scaling and output map of the bundle the model was trained on.
    dataset::ScalingParams scaling;
    std::vector<dataset::TargetBlock> blocks;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
        return n;
    }
    const Mat& lstm_W(std::size_t l) const { return tensors[2 * l]; }
    const Mat& lstm_b(std::size_t l) const { return tensors[2 * l + 1]; }
    const Mat& dec_W(std::size_t k) const { return tensors[2 * arch.layers + 2 * k]; }
    const Mat& dec_b(std::size_t k) const { return tensors[2 * arch.layers + 2 * k + 1]; }
    std::size_t decoder_layers() const { return arch.decoder.size() + 1; }
};

/// Tensors shaped for `arch`, drawn uniformly in +-1/sqrt(fan_in) from `seed`.
/// The LSTM fan-in is the hidden width; the decoder fan-in is the layer input.
inline ShredModel make_model(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    ShredModel m;
    m.arch = arch;
    std::mt19937_64 rng(seed);
    auto add = [&](std::string name, std::size_t rows, std::size_t cols, double bound) {
        std::uniform_real_distribution<double> u(-bound, bound);
        Mat t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index j = 0; j < t.cols(); ++j)
            for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = u(rng);
        m.tensors.push_back(std::move(t));
        m.names.push_back(std::move(name));
    };
    const std::size_t H = arch.hidden;
    const double kh = 1.0 / std::sqrt(static_cast<double>(H));
    for (std::size_t l = 0; l < arch.layers; ++l) {
        const std::size_t in = l == 0 ? arch.n_sensors : H;
        add("lstm" + std::to_string(l) + ".W", 4 * H, in + H, kh);
        add("lstm" + std::to_string(l) + ".b", 4 * H, 1, kh);
    }
    std::size_t in = H;
    std::vector<std::size_t> widths = arch.decoder;
    widths.push_back(arch.output);
    for (std::size_t k = 0; k < widths.size(); ++k) {
        const double kd = 1.0 / std::sqrt(static_cast<double>(in));
        add("dec" + std::to_string(k) + ".W", widths[k], in, kd);
        add("dec" + std::to_string(k) + ".b", widths[k], 1, kd);
        in = widths[k];
    }
    return m;
}

/// Default architecture sized for a dataset bundle.
inline Architecture architecture_for(const dataset::Bundle& b) {
    Architecture a;
    a.n_sensors = b.sensors.size();
    a.lag = b.config.lag;
    a.output = b.target_width();
    a.param_head = b.config.param_head;
    return a;
}

inline ShredModel make_model(const dataset::Bundle& b, std::uint64_t seed, Architecture arch) {
    arch.n_sensors = b.sensors.size();
    arch.lag = b.config.lag;
    arch.output = b.target_width();
    arch.param_head = b.config.param_head;
    ShredModel m = make_model(arch, seed);
    m.scaling = b.scaling;
    m.blocks = b.blocks;
    return m;
}

// ---------------------------------------------------------------- forward

/// A batch of windows: `steps[t]` is n_sensors x batch for window position t.
using Window = std::vector<Mat>;

struct ForwardCache {
    std::vector<std::vector<Mat>> xh;     // [layer][t] stacked input and previous hidden
    std::vector<std::vector<Mat>> gates;  // [layer][t] activated gates
    std::vector<std::vector<Mat>> c;      // [layer][t + 1], c[l][0] = 0
    std::vector<std::vector<Mat>> tc;     // [layer][t] tanh(c_t)
    std::vector<Mat> dec_in;              // input of each decoder layer
    std::vector<Mat> dec_pre;             // pre-activation of each decoder layer
    std::vector<Mat> masks;               // dropout masks of hidden decoder layers
};

namespace detail {

inline Mat sigmoid(const Mat& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

inline void check_finite(const Mat& m, const std::string& where) {
    if (!m.allFinite()) throw NumericError("non-finite value in " + where);
}

}  // namespace detail

/// Final top-layer hidden state (hidden x batch).
inline Mat lstm_forward(const ShredModel& m, const Window& x, ForwardCache* cache = nullptr) {
    const auto H = static_cast<Eigen::Index>(m.arch.hidden);
    if (x.empty()) throw DimensionError("lstm_forward: empty window");
    const Eigen::Index B = x.front().cols();
    if (cache) {
        cache->xh.assign(m.arch.layers, {});
        cache->gates.assign(m.arch.layers, {});
        cache->c.assign(m.arch.layers, {});
        cache->tc.assign(m.arch.layers, {});
    }
    std::vector<Mat> seq = x;
    for (std::size_t l = 0; l < m.arch.layers; ++l) {
        const Mat& W = m.lstm_W(l);
        const Mat& b = m.lstm_b(l);
        const Eigen::Index in = W.cols() - H;
        Mat h = Mat::Zero(H, B), c = Mat::Zero(H, B);
        if (cache) cache->c[l].push_back(c);
        for (std::size_t t = 0; t < seq.size(); ++t) {
            if (seq[t].rows() != in || seq[t].cols() != B)
                throw DimensionError("lstm_forward: window step has shape " + std::to_string(seq[t].rows()) + "x" +
                                     std::to_string(seq[t].cols()) + ", expected " + std::to_string(in) + "x" +
                                     std::to_string(B));
            Mat xh(in + H, B);
            xh.topRows(in) = seq[t];
            xh.bottomRows(H) = h;
            Mat a = W * xh;
            a.colwise() += b.col(0);
            Mat g(4 * H, B);
            g.topRows(3 * H) = detail::sigmoid(a.topRows(3 * H));
            g.bottomRows(H) = a.bottomRows(H).array().tanh().matrix();
            c = (g.middleRows(H, H).array() * c.array() + g.topRows(H).array() * g.bottomRows(H).array()).matrix();
            Mat tcm = c.array().tanh().matrix();
            h = (g.middleRows(2 * H, H).array() * tcm.array()).matrix();
            if (!h.allFinite())
                throw NumericError("non-finite LSTM state in layer " + std::to_string(l) + " at step " +
                                   std::to_string(t));
            if (cache) {
                cache->xh[l].push_back(std::move(xh));
                cache->gates[l].push_back(std::move(g));
                cache->c[l].push_back(c);
                cache->tc[l].push_back(std::move(tcm));
            }
            seq[t] = h;
        }
    }
    return seq.back();
}

/// Decoder output (output x batch). `rng` enables dropout on hidden layers.
inline Mat sdn_forward(const ShredModel& m, const Mat& hidden, ForwardCache* cache = nullptr,
                       std::mt19937_64* rng = nullptr) {
    if (cache) {
        cache->dec_in.clear();
        cache->dec_pre.clear();
        cache->masks.clear();
    }
    Mat a = hidden;
    const std::size_t n = m.decoder_layers();
    for (std::size_t k = 0; k < n; ++k) {
        if (a.rows() != m.dec_W(k).cols()) throw DimensionError("sdn_forward: input width mismatch");
        Mat z = m.dec_W(k) * a;
        z.colwise() += m.dec_b(k).col(0);
        if (cache) {
            cache->dec_in.push_back(a);
            cache->dec_pre.push_back(z);
        }
        if (k + 1 == n) return z;
        a = m.arch.activation == Activation::ReLU ? Mat(z.cwiseMax(0.0)) : z;
        if (rng && m.arch.dropout > 0.0) {
            std::bernoulli_distribution keep(1.0 - m.arch.dropout);
            Mat mask(a.rows(), a.cols());
            for (Eigen::Index j = 0; j < mask.cols(); ++j)
                for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(*rng) ? 1.0 / (1.0 - m.arch.dropout) : 0.0;
            a = a.cwiseProduct(mask);
            if (cache) cache->masks.push_back(std::move(mask));
        } else if (cache) {
            cache->masks.push_back(Mat());
        }
    }
    return a;
}

inline Mat forward(const ShredModel& m, const Window& x, ForwardCache* cache = nullptr, std::mt19937_64* rng = nullptr) {
    return sdn_forward(m, lstm_forward(m, x, cache), cache, rng);
}

// ---------------------------------------------------------------- loss and gradients

/// Mean of squared componentwise errors.
inline double mse_loss(const Mat& pred, const Mat& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw DimensionError("loss: prediction and target shapes differ");
    if (pred.size() == 0) throw DimensionError("loss: empty batch");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

/// Gradients of the loss for every tensor, in model order.
inline std::vector<Mat> backward(const ShredModel& m, const ForwardCache& cache, const Mat& pred, const Mat& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw DimensionError("backward: prediction and target shapes differ");
    std::vector<Mat> grads;
    for (const auto& t : m.tensors) grads.push_back(Mat::Zero(t.rows(), t.cols()));
    const std::size_t base = 2 * m.arch.layers;
    const std::size_t n = m.decoder_layers();

    Mat d = 2.0 * (pred - target) / static_cast<double>(pred.size());
    for (std::size_t k = n; k-- > 0;) {
        grads[base + 2 * k] = d * cache.dec_in[k].transpose();
        grads[base + 2 * k + 1] = d.rowwise().sum();
        d = m.dec_W(k).transpose() * d;
        if (k > 0) {
            if (m.arch.activation == Activation::ReLU)
                d = d.cwiseProduct((cache.dec_pre[k - 1].array() > 0.0).cast<double>().matrix());
            if (cache.masks[k - 1].size() > 0) d = d.cwiseProduct(cache.masks[k - 1]);
        }
    }

    // Backpropagation through time, top layer first.
    const auto H = static_cast<Eigen::Index>(m.arch.hidden);
    const std::size_t T = cache.xh.front().size();
    const Eigen::Index B = d.cols();
    std::vector<Mat> dh_ext(T, Mat::Zero(H, B));
    dh_ext[T - 1] = d;
    for (std::size_t l = m.arch.layers; l-- > 0;) {
        const Mat& W = m.lstm_W(l);
        const Eigen::Index in = W.cols() - H;
        Mat& gW = grads[2 * l];
        Mat& gb = grads[2 * l + 1];
        Mat dh_next = Mat::Zero(H, B), dc_next = Mat::Zero(H, B);
        std::vector<Mat> dx(T);
        for (std::size_t t = T; t-- > 0;) {
            const Mat& g = cache.gates[l][t];
            const auto i = g.topRows(H).array();
            const auto f = g.middleRows(H, H).array();
            const auto o = g.middleRows(2 * H, H).array();
            const auto gg = g.bottomRows(H).array();
            const auto tc = cache.tc[l][t].array();
            const Mat dh = dh_ext[t] + dh_next;
            const Eigen::ArrayXXd dc = dc_next.array() + dh.array() * o * (1.0 - tc * tc);
            Mat da(4 * H, B);
            da.topRows(H) = (dc * gg * i * (1.0 - i)).matrix();
            da.middleRows(H, H) = (dc * cache.c[l][t].array() * f * (1.0 - f)).matrix();
            da.middleRows(2 * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix();
            da.bottomRows(H) = (dc * i * (1.0 - gg * gg)).matrix();
            dc_next = (dc * f).matrix();
            gW.noalias() += da * cache.xh[l][t].transpose();
            gb += da.rowwise().sum();
            const Mat dxh = W.transpose() * da;
            dh_next = dxh.bottomRows(H);
            dx[t] = dxh.topRows(in);
        }
        dh_ext = std::move(dx);
    }
    return grads;
}

// ---------------------------------------------------------------- prediction

/// Converts row-major windows (lag x n_sensors each) into a batched Window.
inline Window make_window(const std::vector<const linalg::DenseMatrix*>& windows) {
    if (windows.empty()) throw DimensionError("make_window: no samples");
    const std::size_t lag = windows.front()->rows(), ns = windows.front()->cols();
    Window w(lag, Mat(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(windows.size())));
    for (std::size_t b = 0; b < windows.size(); ++b) {
        if (windows[b]->rows() != lag || windows[b]->cols() != ns)
            throw DimensionError("make_window: windows have different shapes");
        for (std::size_t t = 0; t < lag; ++t)
            for (std::size_t s = 0; s < ns; ++s)
                w[t](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(b)) = (*windows[b])(t, s);
    }
    return w;
}

/// Output for one window (lag x n_sensors).
inline std::vector<double> predict(const ShredModel& m, const linalg::DenseMatrix& window) {
    if (window.rows() != m.arch.lag || window.cols() != m.arch.n_sensors)
        throw DimensionError("predict: window is " + std::to_string(window.rows()) + "x" +
                             std::to_string(window.cols()) + ", expected " + std::to_string(m.arch.lag) + "x" +
                             std::to_string(m.arch.n_sensors));
    const Mat y = forward(m, make_window({&window}));
    return {y.data(), y.data() + y.size()};
}

/// Outputs for every frame of a sensor series (Nt x n_sensors) with
/// first-frame padding; returns Nt x output.
inline linalg::DenseMatrix predict_series(const ShredModel& m, const linalg::DenseMatrix& sensors) {
    if (sensors.cols() != m.arch.n_sensors)
        throw DimensionError("predict_series: " + std::to_string(sensors.cols()) + " sensors, model expects " +
                             std::to_string(m.arch.n_sensors));
    const auto samples = dataset::build_lagged_sequences(sensors, linalg::DenseMatrix(), m.arch.lag);
    std::vector<const linalg::DenseMatrix*> ptr;
    for (const auto& s : samples) ptr.push_back(&s.input);
    const Mat y = forward(m, make_window(ptr));
    linalg::DenseMatrix out(sensors.rows(), m.arch.output);
    for (std::size_t k = 0; k < sensors.rows(); ++k)
        for (std::size_t j = 0; j < m.arch.output; ++j)
            out(k, j) = y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
    return out;
}

}  // namespace mhdshred::shred
