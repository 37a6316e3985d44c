#pragma once

// Orchestration of the campaign pipeline: experiment configuration, the
// snapshot store, training, evaluation, export and audit. Every stage writes a
// manifest that records the hash of the manifest it consumed, so a report can
// be traced back to its snapshots.
//
// Layout under the output root:
//   <out>/<store-hash>/store.txt            resolved simulator config and cases
//   <out>/<store-hash>/store_manifest.txt   run label -> run manifest hash
//   <out>/<store-hash>/runs/<label>/        one snapshot series per case
//   <out>/<store-hash>/models/<model-hash>/ config.txt, bundle/, model.shred,
//                                           history.csv, train_manifest.txt
//   .../models/<model-hash>/eval[-oracle]/  reports, VTK frames, eval_manifest.txt

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mhdshred/dataset/bundle.hpp"
#include "mhdshred/dataset/splits.hpp"
#include "mhdshred/error.hpp"
#include "mhdshred/eval/evaluate.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/mhdsim/simulation.hpp"
#include "mhdshred/mhdsim/vtk.hpp"
#include "mhdshred/shred/io.hpp"
#include "mhdshred/shred/model.hpp"
#include "mhdshred/shred/train.hpp"

namespace mhdshred::cli {

namespace fs = std::filesystem;
using dataset::CaseSpec;
using dataset::Split;
using dataset::SplitSpec;
using mhdsim::MagneticDrive;
using mhdsim::SimConfig;
using mhdsim::SnapshotSeries;

// ---------------------------------------------------------------- config

/// Limits on post-burn-in maxima; unset limits are not checked. `cases`
/// restricts the check to some test labels (all test cases when empty).
struct Thresholds {
    std::optional<double> eps_T, eps_u, eps_p, param_rmse;
    std::vector<std::string> cases;
};

struct ExperimentConfig {
    std::string campaign = "toroidal";
    SplitSpec split = dataset::toroidal_preset();
    SimConfig sim;
    dataset::DatasetConfig dataset;
    shred::TrainConfig train;
    shred::Architecture arch;
    std::uint64_t seed = 0;
    double vtk_time = 2.0;
    Thresholds thresholds;

    KeyValueDoc sim_doc() const {
        KeyValueDoc d;
        for (const auto& [k, v] : sim.to_keyvalue().entries())
            if (k.rfind("drive.", 0) != 0) d.set("sim." + k, v);
        return d;
    }

    KeyValueDoc cases_doc() const {
        KeyValueDoc d;
        std::size_t i = 0;
        for (Split s : {Split::Train, Split::Validation, Split::Test})
            for (const auto& c : split.cases(s)) {
                const std::string p = "case." + std::to_string(i++) + ".";
                d.set(p + "label", c.label);
                d.set(p + "split", dataset::to_string(s));
                SimConfig tmp;
                tmp.drive = c.drive;
                for (const auto& [k, v] : tmp.to_keyvalue().section("drive").entries()) d.set(p + k, v);
            }
        d.set("case.count", i);
        return d;
    }

    KeyValueDoc train_doc() const {
        KeyValueDoc d;
        d.set("train.max_epochs", train.max_epochs);
        d.set("train.batch_size", train.batch_size);
        d.set("train.learning_rate", train.learning_rate);
        d.set("train.patience", train.patience);
        d.set("train.beta1", train.beta1);
        d.set("train.beta2", train.beta2);
        d.set("train.epsilon", train.epsilon);
        d.set("train.seed", static_cast<std::size_t>(seed));
        d.set("model.hidden", arch.hidden);
        d.set("model.layers", arch.layers);
        d.merge(arch.to_keyvalue().section("arch"), "model");
        return d;
    }

    KeyValueDoc to_doc() const {
        KeyValueDoc d;
        d.set("experiment.campaign", campaign);
        d.set("experiment.seed", static_cast<std::size_t>(seed));
        d.set("experiment.vtk_time", vtk_time);
        d.merge(sim_doc());
        d.merge(dataset::dataset_config_doc(dataset));
        d.merge(train_doc());
        auto opt = [&](const std::string& k, const std::optional<double>& v) {
            if (v) d.set("threshold." + k, *v);
        };
        opt("eps_T", thresholds.eps_T);
        opt("eps_u", thresholds.eps_u);
        opt("eps_p", thresholds.eps_p);
        opt("param_rmse", thresholds.param_rmse);
        std::string list;
        for (const auto& c : thresholds.cases) list += (list.empty() ? "" : ",") + c;
        if (!list.empty()) d.set("threshold.cases", list);
        d.merge(cases_doc());
        return d;
    }

    /// Identity of the snapshot store: simulator settings and cases.
    std::string store_hash() const {
        KeyValueDoc d = sim_doc();
        d.merge(cases_doc());
        return d.hash();
    }

    /// Identity of a trained model: store plus dataset, network and training settings.
    std::string model_hash() const {
        KeyValueDoc d;
        d.set("store", store_hash());
        d.merge(dataset::dataset_config_doc(dataset));
        d.merge(train_doc());
        return d.hash();
    }

    SimConfig case_config(const CaseSpec& c) const {
        SimConfig s = sim;
        s.drive = c.drive;
        return s;
    }

    void validate() const {
        split.validate();
        sim.validate();
        dataset.validate();
        train.validate();
        arch.validate();
        for (Split s : {Split::Train, Split::Validation, Split::Test})
            for (const auto& c : split.cases(s)) case_config(c).validate();
        if (!(vtk_time > 0.0)) throw ConfigurationError("vtk_time must be positive");
    }
};

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty()) out.push_back(trim(item));
    return out;
}

/// Built-in campaign presets with their acceptance thresholds.
inline ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig c;
    c.campaign = name;
    c.split = dataset::preset(name);
    // The loss plateaus for a hundred or more epochs before the network
    // resolves the weak field-strength signal in the temperature sensors, so
    // campaigns use the whole epoch budget and keep the best epoch.
    c.train.patience = c.train.max_epochs;
    if (name == "toroidal") {
        c.thresholds = {0.06, 0.10, 0.05, std::nullopt, {"Bx0.75", "Bx1.85"}};
    } else if (name == "combined") {
        c.thresholds = {0.06, 0.06, 0.05, std::nullopt, {}};
    } else {
        c.vtk_time = 1.75;
        c.thresholds = {0.08, 0.06, 0.06, 0.10, {}};
    }
    return c;
}

/// Applies a configuration document on top of `base`. Case lists in the
/// document replace the preset cases.
inline ExperimentConfig apply_doc(ExperimentConfig c, const KeyValueDoc& d) {
    if (d.has("experiment.campaign") && d.get("experiment.campaign") != c.campaign) {
        const std::string name = d.get("experiment.campaign");
        const auto names = dataset::preset_names();
        if (std::find(names.begin(), names.end(), name) != names.end()) c = preset_config(name);
        c.campaign = name;
    }
    c.seed = static_cast<std::uint64_t>(d.get_int_or("experiment.seed", static_cast<long long>(c.seed)));
    c.vtk_time = d.get_double_or("experiment.vtk_time", c.vtk_time);

    KeyValueDoc sim = c.sim.to_keyvalue();
    for (const auto& [k, v] : d.section("sim").entries()) {
        if (!sim.has(k) || k.rfind("drive.", 0) == 0) throw ConfigurationError("unknown simulator key 'sim." + k + "'");
        sim.set(k, v);
    }
    c.sim = SimConfig::from_keyvalue(sim);

    KeyValueDoc ds;
    for (const auto& [k, v] : dataset::dataset_config_doc(c.dataset).entries())
        if (!d.has("dataset.sensor_count") || k.rfind("dataset.sensor", 0) != 0) ds.set(k, v);
    for (const auto& [k, v] : d.section("dataset").entries()) ds.set("dataset." + k, v);
    c.dataset = dataset::dataset_config_from_doc(ds);

    auto& t = c.train;
    t.max_epochs = static_cast<int>(d.get_int_or("train.max_epochs", t.max_epochs));
    t.batch_size = static_cast<std::size_t>(d.get_int_or("train.batch_size", static_cast<long long>(t.batch_size)));
    t.learning_rate = d.get_double_or("train.learning_rate", t.learning_rate);
    t.patience = static_cast<int>(d.get_int_or("train.patience", t.patience));
    t.beta1 = d.get_double_or("train.beta1", t.beta1);
    t.beta2 = d.get_double_or("train.beta2", t.beta2);
    t.epsilon = d.get_double_or("train.epsilon", t.epsilon);

    auto& a = c.arch;
    a.hidden = static_cast<std::size_t>(d.get_int_or("model.hidden", static_cast<long long>(a.hidden)));
    a.layers = static_cast<std::size_t>(d.get_int_or("model.layers", static_cast<long long>(a.layers)));
    if (d.has("model.decoder")) {
        a.decoder.clear();
        for (const auto& w : split_list(d.get("model.decoder"))) a.decoder.push_back(std::stoull(w));
    }
    a.dropout = d.get_double_or("model.dropout", a.dropout);
    if (d.has("model.activation")) {
        const std::string act = d.get("model.activation");
        if (act != "relu" && act != "identity") throw ConfigurationError("unknown activation '" + act + "'");
        a.activation = act == "relu" ? shred::Activation::ReLU : shred::Activation::Identity;
    }

    auto thr = [&](const std::string& k, std::optional<double>& v) {
        if (d.has("threshold." + k)) v = d.get_double("threshold." + k);
    };
    thr("eps_T", c.thresholds.eps_T);
    thr("eps_u", c.thresholds.eps_u);
    thr("eps_p", c.thresholds.eps_p);
    thr("param_rmse", c.thresholds.param_rmse);
    if (d.has("threshold.cases")) c.thresholds.cases = split_list(d.get("threshold.cases"));

    if (d.has("case.count")) {
        SplitSpec s{c.campaign, {}, {}, {}};
        const auto n = d.get_int("case.count");
        for (long long i = 0; i < n; ++i) {
            const std::string p = "case." + std::to_string(i) + ".";
            KeyValueDoc drive;
            for (const auto& [k, v] : d.section("case." + std::to_string(i)).entries())
                if (k != "label" && k != "split") drive.set("drive." + k, v);
            const SimConfig dc = SimConfig::from_keyvalue(drive);
            CaseSpec cs{d.get(p + "label"), dc.drive};
            const Split sp = dataset::split_from_string(d.get(p + "split"));
            (sp == Split::Train ? s.train : sp == Split::Validation ? s.val : s.test).push_back(cs);
        }
        c.split = s;
    }
    return c;
}

/// Parses "NXxNYxNZ".
inline void apply_grid(ExperimentConfig& c, const std::string& spec) {
    int n[3] = {0, 0, 0};
    std::size_t pos = 0;
    for (int a = 0; a < 3; ++a) {
        const auto next = a < 2 ? spec.find('x', pos) : spec.size();
        if (next == std::string::npos) throw UsageError("--grid expects NXxNYxNZ, got '" + spec + "'");
        try {
            std::size_t used = 0;
            n[a] = std::stoi(spec.substr(pos, next - pos), &used);
            if (used != next - pos) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw UsageError("--grid expects NXxNYxNZ, got '" + spec + "'");
        }
        pos = next + 1;
    }
    c.sim.geometry.nx = n[0];
    c.sim.geometry.ny = n[1];
    c.sim.geometry.nz = n[2];
}

// ---------------------------------------------------------------- paths and lock

struct Paths {
    fs::path store, models;

    fs::path run(const std::string& label) const { return store / "runs" / label; }
    fs::path model_dir(const ExperimentConfig& c) const { return models / c.model_hash(); }
};

inline Paths paths_for(const ExperimentConfig& c, const fs::path& out) {
    const fs::path store = out / c.store_hash();
    return {store, store / "models"};
}

/// Exclusive lock on an output directory for the lifetime of the object.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw UsageError("output directory " + dir.string() + " is locked by another command (" + path_.string() +
                             "); remove the lock file if no other command is running");
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] const auto w = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

using Log = std::function<void(const std::string&)>;

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
    if (!out) throw FormatError("write failed for " + path.string());
}

// ---------------------------------------------------------------- generate

struct GenerateResult {
    std::size_t simulated = 0;
    std::size_t reused = 0;
    double seconds = 0.0;
};

/// True when the run directory holds a complete series for `cfg`.
inline bool run_is_current(const fs::path& dir, const SimConfig& cfg) {
    if (!fs::exists(dir / "manifest.txt")) return false;
    try {
        const KeyValueDoc m = KeyValueDoc::load(dir / "manifest.txt");
        if (m.get("run.config_hash") != cfg.hash()) return false;
        for (const auto& name : mhdsim::snapshot_field_names())
            if (m.get("files." + name) != hash_file(dir / (name + ".dmx"))) return false;
        return fs::exists(dir / "cells.csv") && fs::exists(dir / "drive.csv");
    } catch (const Error&) {
        return false;
    }
}

inline std::vector<std::pair<Split, CaseSpec>> all_cases(const SplitSpec& s) {
    std::vector<std::pair<Split, CaseSpec>> out;
    for (Split sp : {Split::Train, Split::Validation, Split::Test})
        for (const auto& c : s.cases(sp)) out.emplace_back(sp, c);
    return out;
}

inline std::string store_manifest_text(const ExperimentConfig& c, const Paths& p) {
    KeyValueDoc m;
    m.set("store.hash", c.store_hash());
    for (const auto& [sp, cs] : all_cases(c.split)) {
        const fs::path dir = p.run(cs.label);
        m.set("run." + cs.label,
              fs::exists(dir / "manifest.txt") ? hash_file(dir / "manifest.txt") : std::string("missing"));
    }
    return m.serialize();
}

/// Simulates every case whose run directory is missing or stale, using up to
/// `jobs` threads. Existing current runs are left untouched.
inline GenerateResult generate(const ExperimentConfig& c, const fs::path& out, std::size_t jobs, const Log& log) {
    c.validate();
    const auto start = std::chrono::steady_clock::now();
    const Paths p = paths_for(c, out);
    DirLock lock(p.store);
    write_text(p.store / "store.txt", [&] {
        KeyValueDoc d = c.sim_doc();
        d.merge(c.cases_doc());
        return d.serialize();
    }());

    std::vector<CaseSpec> todo;
    GenerateResult res;
    for (const auto& [sp, cs] : all_cases(c.split)) {
        if (run_is_current(p.run(cs.label), c.case_config(cs))) {
            ++res.reused;
            log("up to date: " + cs.label);
        } else {
            todo.push_back(cs);
        }
    }

    std::mutex mu;
    std::exception_ptr failure;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            CaseSpec cs;
            {
                std::lock_guard<std::mutex> g(mu);
                if (next >= todo.size() || failure) return;
                cs = todo[next++];
            }
            try {
                const SnapshotSeries s = mhdsim::run_simulation(c.case_config(cs));
                const fs::path dir = p.run(cs.label);
                fs::remove_all(dir);
                mhdsim::save_series(s, dir);
                std::lock_guard<std::mutex> g(mu);
                ++res.simulated;
                log("simulated " + cs.label + " in " + format_double(std::round(s.wall_time * 10) / 10) + " s");
            } catch (const Error& e) {
                std::lock_guard<std::mutex> g(mu);
                if (!failure) failure = std::make_exception_ptr(SimulationError("run " + cs.label + ": " + e.what(), -1));
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(jobs, todo.size()));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    write_text(p.store / "store_manifest.txt", store_manifest_text(c, p));
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

/// Loads every run of the campaign; throws DataError naming all absent or
/// stale settings.
inline std::vector<SnapshotSeries> load_store(const ExperimentConfig& c, const Paths& p,
                                              const std::vector<Split>& needed) {
    std::vector<std::string> missing;
    for (Split sp : needed)
        for (const auto& cs : c.split.cases(sp))
            if (!run_is_current(p.run(cs.label), c.case_config(cs))) {
                const auto b = cs.drive;
                std::string what = cs.label + " (" + dataset::to_string(sp) + ", " + mhdsim::to_string(b.kind);
                if (b.kind == mhdsim::DriveKind::SinusoidalToroidal)
                    what += " A=" + format_double(b.A) + " omega=" + format_double(b.omega) +
                            " phi=" + format_double(b.phi) + " C=" + format_double(b.C);
                else
                    what += " Bx=" + format_double(b.Bx) + " By=" + format_double(b.By);
                missing.push_back(what + ")");
            }
    if (!missing.empty()) {
        std::string msg = "missing simulation runs in " + p.store.string() + ":";
        for (const auto& m : missing) msg += "\n  " + m;
        msg += "\nrun `mhdshred generate` with the same configuration first";
        throw DataError(msg);
    }
    std::vector<SnapshotSeries> out;
    for (Split sp : needed)
        for (const auto& cs : c.split.cases(sp)) out.push_back(mhdsim::load_series(p.run(cs.label)));
    return out;
}

inline std::vector<dataset::CampaignRun> campaign_runs(const ExperimentConfig& c,
                                                       const std::vector<SnapshotSeries>& series) {
    std::vector<dataset::CampaignRun> runs;
    std::size_t i = 0;
    for (const auto& [sp, cs] : all_cases(c.split)) runs.push_back({cs, sp, &series.at(i++)});
    return runs;
}

// ---------------------------------------------------------------- train

struct TrainOutcome {
    fs::path model_dir;
    shred::TrainResult result;
    double seconds = 0.0;        // training loop only
    double total_seconds = 0.0;  // bundle build, training and saving
    std::size_t parameters = 0;
};

/// Builds the bundle, trains and writes the model directory. `model_dir`
/// overrides the hashed location.
inline TrainOutcome train_experiment(const ExperimentConfig& c, const fs::path& out, const Log& log,
                                     std::optional<fs::path> model_dir = std::nullopt) {
    c.validate();
    const auto start = std::chrono::steady_clock::now();
    const Paths p = paths_for(c, out);
    const auto series = load_store(c, p, {Split::Train, Split::Validation, Split::Test});
    TrainOutcome o;
    o.model_dir = model_dir ? *model_dir : p.model_dir(c);
    DirLock lock(o.model_dir);
    write_text(o.model_dir / "config.txt", c.to_doc().serialize());

    const dataset::Bundle b = dataset::build_bundle(c.campaign, campaign_runs(c, series), c.dataset);
    fs::remove_all(o.model_dir / "bundle");
    dataset::save_bundle(b, o.model_dir / "bundle");
    log("bundle: " + std::to_string(b.dof()) + " cells, " + std::to_string(b.target_width()) + " targets");

    shred::ShredModel model = shred::make_model(b, c.seed, c.arch);
    o.parameters = model.arch.parameter_count();
    const auto train_set = shred::make_samples(b, Split::Train);
    const auto val_set = shred::make_samples(b, Split::Validation);
    const auto t0 = std::chrono::steady_clock::now();
    o.result = shred::train(model, train_set, val_set, c.train, [&](const shred::EpochRecord& r) {
        if (r.epoch % 25 == 0) log("epoch " + std::to_string(r.epoch) + " train " + format_double(r.train_loss) +
                                   " val " + format_double(r.val_loss));
    });
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    shred::save_model(model, o.model_dir / "model.shred");
    shred::write_history_csv(o.result, o.model_dir / "history.csv");

    KeyValueDoc m;
    m.set("train.config_hash", c.to_doc().hash());
    m.set("train.model_hash", c.model_hash());
    m.set("train.store_manifest", hash_file(p.store / "store_manifest.txt"));
    m.set("train.bundle_manifest", hash_file(o.model_dir / "bundle" / "split_manifest.txt"));
    m.set("train.epochs", o.result.history.size());
    m.set("train.best_epoch", o.result.best_epoch);
    m.set("train.best_val_loss", o.result.best_val);
    m.set("train.stopped_early", o.result.stopped_early);
    m.set("train.parameters", o.parameters);
    m.set("files.model", hash_file(o.model_dir / "model.shred"));
    m.set("files.history", hash_file(o.model_dir / "history.csv"));
    m.save(o.model_dir / "train_manifest.txt");
    o.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(o.model_dir / "timing.txt", "train_loop_s = " + format_double(o.seconds) +
                                               "\ntotal_s = " + format_double(o.total_seconds) + "\n");
    return o;
}

// ---------------------------------------------------------------- evaluate

struct Violation {
    std::string case_id, metric;
    double value, limit;
};

struct EvaluateOutcome {
    fs::path report_dir;
    std::vector<eval::CaseResult> results;
    std::vector<Violation> violations;
    std::vector<fs::path> vtk_files;
};

inline std::vector<Violation> check_thresholds(const Thresholds& t, const std::vector<eval::CaseResult>& results,
                                               std::size_t burn_in) {
    std::vector<Violation> v;
    for (const auto& r : results) {
        if (!t.cases.empty() && std::find(t.cases.begin(), t.cases.end(), r.id) == t.cases.end()) continue;
        auto check = [&](const std::string& name, const std::optional<double>& lim, const eval::ErrorSeries& e) {
            if (!lim) return;
            const double m = eval::series_stats(e.eps, burn_in).max;
            if (!(m <= *lim)) v.push_back({r.id, name, m, *lim});
        };
        check("eps_T", t.eps_T, r.T);
        check("eps_u", t.eps_u, r.u);
        check("eps_p", t.eps_p, r.p);
        if (t.param_rmse && r.param && !(r.param->rmse_post <= *t.param_rmse))
            v.push_back({r.id, "param_rmse", r.param->rmse_post, *t.param_rmse});
    }
    return v;
}

/// Frame whose stored time is closest to `t`.
inline std::size_t frame_at(const std::vector<double>& times, double t) {
    if (times.empty()) throw DataError("empty time axis");
    std::size_t best = 0;
    for (std::size_t k = 1; k < times.size(); ++k)
        if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
    return best;
}

/// Truth, reconstruction and residual of every field at one frame.
inline void write_comparison_vtk(const fs::path& path, const SnapshotSeries& truth,
                                 const std::map<std::string, linalg::DenseMatrix>& recon, std::size_t frame) {
    const mhdsim::Grid g = mhdsim::make_grid(truth.config);
    std::vector<mhdsim::VtkScalar> scalars;
    for (const auto& name : mhdsim::snapshot_field_names()) {
        const auto t = truth.field(name).column(frame);
        const auto r = recon.at(name).column(frame);
        scalars.push_back({name + "_true", std::vector<double>(t.begin(), t.end())});
        scalars.push_back({name + "_shred", std::vector<double>(r.begin(), r.end())});
        scalars.push_back({name + "_residual", eval::residual_field(std::span<const double>(t), std::span<const double>(r))});
    }
    mhdsim::write_vtk(path, g, scalars, "truth, reconstruction and residual at t = " + format_double(truth.times[frame]));
}

inline EvaluateOutcome evaluate_experiment(const ExperimentConfig& c, const fs::path& out, bool oracle_latents,
                                           const Log& log, std::optional<fs::path> model_dir = std::nullopt) {
    c.validate();
    const Paths p = paths_for(c, out);
    const fs::path mdir = model_dir ? *model_dir : p.model_dir(c);
    if (!fs::exists(mdir / "model.shred") || !fs::exists(mdir / "train_manifest.txt"))
        throw DataError("no trained model in " + mdir.string() + "; run `mhdshred train` with the same configuration first");
    const dataset::Bundle b = dataset::load_bundle(mdir / "bundle");
    const shred::ShredModel model = shred::load_model(mdir / "model.shred");
    const auto tests = load_store(c, p, {Split::Test});

    EvaluateOutcome o;
    o.report_dir = mdir / (oracle_latents ? "eval-oracle" : "eval");
    DirLock lock(o.report_dir);
    for (std::size_t i = 0; i < tests.size(); ++i) {
        const std::string& id = c.split.test[i].label;
        o.results.push_back(eval::evaluate_case(b, model, tests[i], id, oracle_latents));
        const auto& r = o.results.back();
        log(id + ": post-burn-in max eps_T " + format_double(eval::series_stats(r.T.eps, b.config.lag).max) +
            ", eps_u " + format_double(eval::series_stats(r.u.eps, b.config.lag).max) + ", eps_p " +
            format_double(eval::series_stats(r.p.eps, b.config.lag).max));
        const std::size_t f = frame_at(tests[i].times, c.vtk_time);
        std::ostringstream name;
        name << id << "_t" << std::fixed << std::setprecision(3) << tests[i].times[f] << ".vtk";
        o.vtk_files.push_back(o.report_dir / name.str());
        write_comparison_vtk(o.vtk_files.back(), tests[i], r.recon, f);
    }
    eval::campaign_report(o.results, o.report_dir, b.config.lag);
    o.violations = check_thresholds(c.thresholds, o.results, b.config.lag);

    KeyValueDoc m;
    m.set("eval.train_manifest", hash_file(mdir / "train_manifest.txt"));
    m.set("eval.oracle_latents", oracle_latents);
    m.set("eval.summary", hash_file(o.report_dir / "summary.txt"));
    for (const auto& r : o.results)
        m.set("files." + r.id, hash_file(o.report_dir / eval::case_file_name(r.id)));
    m.set("eval.violations", o.violations.size());
    m.save(o.report_dir / "eval_manifest.txt");
    return o;
}

// ---------------------------------------------------------------- export

/// VTK or CSV export of one field and frame of a stored run, or a CSV
/// re-export of an evaluation case file.
inline void export_artifact(const fs::path& source, const std::string& format, const std::string& field,
                            std::size_t frame, const fs::path& dest) {
    if (format != "vtk" && format != "csv") throw UsageError("unknown export format '" + format + "' (expected vtk or csv)");
    if (fs::is_directory(source) && fs::exists(source / "manifest.txt")) {
        const SnapshotSeries s = mhdsim::load_series(source);
        const auto& f = s.field(field);
        if (frame >= s.frame_count())
            throw UsageError("frame " + std::to_string(frame) + " out of range (run has " +
                             std::to_string(s.frame_count()) + " frames)");
        const auto col = f.column(frame);
        if (format == "vtk") {
            mhdsim::write_vtk(dest, mhdsim::make_grid(s.config), {{field, std::vector<double>(col.begin(), col.end())}},
                              field + " at t = " + format_double(s.times[frame]));
        } else {
            std::ostringstream os;
            os << "cell_id,x,y,z," << field << '\n';
            for (std::size_t r = 0; r < s.dof(); ++r)
                os << s.cell_ids[r] << ',' << format_double(s.centers[r][0]) << ',' << format_double(s.centers[r][1])
                   << ',' << format_double(s.centers[r][2]) << ',' << format_double(col[r]) << '\n';
            write_text(dest, os.str());
        }
        return;
    }
    if (fs::is_regular_file(source) && source.extension() == ".csv") {
        if (format == "vtk") throw UsageError("error series have no spatial layout; use --format csv");
        std::ifstream in(source);
        std::string line;
        std::getline(in, line);
        std::ostringstream os;
        os << line << '\n';
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::size_t start = 0;
            for (std::size_t i = 0;; ++i) {
                const auto comma = line.find(',', start);
                const std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
                os << (i ? "," : "") << (i == 0 || cell.empty() ? cell : format_double(mhdsim::parse_double(cell)));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            os << '\n';
        }
        write_text(dest, os.str());
        return;
    }
    throw UsageError("export source " + source.string() + " is neither a run directory nor a report CSV");
}

// ---------------------------------------------------------------- audit

inline dataset::AuditReport audit_experiment(const fs::path& bundle_dir, const fs::path& store) {
    std::map<std::string, fs::path> by_hash;
    if (fs::exists(store / "runs"))
        for (const auto& e : fs::directory_iterator(store / "runs"))
            if (fs::exists(e.path() / "manifest.txt"))
                by_hash[KeyValueDoc::load(e.path() / "manifest.txt").get("run.config_hash")] = e.path();
    return dataset::audit_bundle(bundle_dir, [&](const std::string& h) {
        const auto it = by_hash.find(h);
        if (it == by_hash.end()) throw DataError("no stored run with source hash " + h);
        return mhdsim::load_series(it->second);
    });
}

}  // namespace mhdshred::cli
