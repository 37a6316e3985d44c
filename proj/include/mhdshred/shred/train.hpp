#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mhdshred/dataset/bundle.hpp"
#include "mhdshred/dataset/preprocess.hpp"
#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/shred/model.hpp"

namespace mhdshred::shred {

struct TrainConfig {
    int max_epochs = 500;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    int patience = 20;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (max_epochs <= 0 || batch_size == 0 || patience <= 0)
            throw ConfigurationError("epochs, batch size and patience must be positive");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ConfigurationError("learning rate must be finite and non-negative");
    }
};

/// Adam moments, one pair per parameter tensor.
struct OptimizerState {
    std::vector<Mat> m, v;
    std::uint64_t step = 0;

    explicit OptimizerState(const ShredModel& model) {
        for (const auto& t : model.tensors) {
            m.push_back(Mat::Zero(t.rows(), t.cols()));
            v.push_back(Mat::Zero(t.rows(), t.cols()));
        }
    }
};

inline void adam_update(ShredModel& model, OptimizerState& s, const std::vector<Mat>& grads, const TrainConfig& c) {
    ++s.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < model.tensors.size(); ++i) {
        s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * grads[i];
        s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * grads[i].cwiseProduct(grads[i]);
        model.tensors[i].array() -=
            c.learning_rate * (s.m[i].array() / bc1) / ((s.v[i].array() / bc2).sqrt() + c.epsilon);
    }
}

/// All lagged samples of a set of trajectories, stored batch-major.
struct SampleSet {
    Window inputs;  // lag entries of n_sensors x N
    Mat targets;    // output x N

    std::size_t size() const { return static_cast<std::size_t>(targets.cols()); }

    Window input_batch(const std::vector<std::size_t>& idx) const {
        Window w(inputs.size(), Mat(inputs.front().rows(), static_cast<Eigen::Index>(idx.size())));
        for (std::size_t t = 0; t < inputs.size(); ++t)
            for (std::size_t b = 0; b < idx.size(); ++b) w[t].col(static_cast<Eigen::Index>(b)) = inputs[t].col(static_cast<Eigen::Index>(idx[b]));
        return w;
    }
    Mat target_batch(const std::vector<std::size_t>& idx) const {
        Mat y(targets.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t b = 0; b < idx.size(); ++b) y.col(static_cast<Eigen::Index>(b)) = targets.col(static_cast<Eigen::Index>(idx[b]));
        return y;
    }
};

/// One sample per frame of every trajectory; windows never cross trajectories.
inline SampleSet make_samples(const std::vector<const dataset::TrajectoryData*>& trajs, std::size_t lag) {
    if (trajs.empty()) throw DataError("no trajectories for samples");
    std::size_t n = 0;
    for (const auto* t : trajs) n += t->sensors.rows();
    const auto ns = static_cast<Eigen::Index>(trajs.front()->sensors.cols());
    const auto m = static_cast<Eigen::Index>(trajs.front()->targets.cols());
    SampleSet s{Window(lag, Mat(ns, static_cast<Eigen::Index>(n))), Mat(m, static_cast<Eigen::Index>(n))};
    Eigen::Index col = 0;
    for (std::size_t ti = 0; ti < trajs.size(); ++ti) {
        const auto samples = dataset::build_lagged_sequences(trajs[ti]->sensors, trajs[ti]->targets, lag, ti);
        for (const auto& smp : samples) {
            for (std::size_t t = 0; t < lag; ++t)
                for (Eigen::Index j = 0; j < ns; ++j) s.inputs[t](j, col) = smp.input(t, static_cast<std::size_t>(j));
            for (Eigen::Index j = 0; j < m; ++j) s.targets(j, col) = smp.target[static_cast<std::size_t>(j)];
            ++col;
        }
    }
    return s;
}

inline SampleSet make_samples(const dataset::Bundle& b, dataset::Split split) {
    return make_samples(b.split(split), b.config.lag);
}

/// Loss over a whole sample set, evaluated in fixed-size chunks.
inline double evaluate_loss(const ShredModel& m, const SampleSet& s, std::size_t chunk = 512) {
    double sum = 0.0;
    for (std::size_t first = 0; first < s.size(); first += chunk) {
        std::vector<std::size_t> idx(std::min(chunk, s.size() - first));
        std::iota(idx.begin(), idx.end(), first);
        const Mat y = forward(m, s.input_batch(idx));
        sum += (y - s.target_batch(idx)).squaredNorm();
    }
    return sum / static_cast<double>(s.size() * static_cast<std::size_t>(s.targets.rows()));
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
};

using EpochObserver = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam with per-epoch shuffling and early stopping on the
/// validation loss. The model ends with the parameters of the best epoch.
inline TrainResult train(ShredModel& model, const SampleSet& train_set, const SampleSet& val_set,
                         const TrainConfig& cfg, const EpochObserver& on_epoch = {}) {
    cfg.validate();
    if (train_set.size() == 0 || val_set.size() == 0)
        throw DataError("training needs non-empty training and validation sets");
    if (static_cast<std::size_t>(train_set.targets.rows()) != model.arch.output)
        throw DimensionError("target width " + std::to_string(train_set.targets.rows()) +
                             " does not match the model output " + std::to_string(model.arch.output));
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    OptimizerState opt(model);
    TrainResult res;
    std::vector<Mat> best = model.tensors;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    int since_best = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(first),
                                               order.begin() + static_cast<std::ptrdiff_t>(
                                                                   std::min(order.size(), first + cfg.batch_size)));
            const Window x = train_set.input_batch(idx);
            const Mat y = train_set.target_batch(idx);
            ForwardCache cache;
            Mat pred;
            try {
                pred = forward(model, x, &cache, model.arch.dropout > 0.0 ? &rng : nullptr);
            } catch (const NumericError& e) {
                throw TrainingError(e.what(), epoch);
            }
            const double loss = mse_loss(pred, y);
            if (!std::isfinite(loss)) throw TrainingError("training loss is not finite", epoch);
            sum += loss * static_cast<double>(idx.size());
            adam_update(model, opt, backward(model, cache, pred, y), cfg);
        }
        EpochRecord rec{epoch, sum / static_cast<double>(order.size()), 0.0};
        try {
            rec.val_loss = evaluate_loss(model, val_set);
        } catch (const NumericError& e) {
            throw TrainingError(e.what(), epoch);
        }
        if (!std::isfinite(rec.val_loss) || !std::isfinite(rec.train_loss))
            throw TrainingError("loss is not finite", epoch);
        res.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (rec.val_loss < res.best_val) {
            res.best_val = rec.val_loss;
            res.best_epoch = epoch;
            best = model.tensors;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            res.stopped_early = true;
            break;
        }
    }
    model.tensors = std::move(best);
    return res;
}

inline void write_history_csv(const TrainResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "epoch,train_loss,val_loss\n";
    for (const auto& e : r.history)
        out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
}

}  // namespace mhdshred::shred
