#pragma once

// Reconstruction of full states from model outputs and comparison against
// held-out simulator truth. The primary error convention is physical units
// with the hydrostatic part removed from pressure; errors on min-max
// normalized fields are reported alongside.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mhdshred/dataset/bundle.hpp"
#include "mhdshred/error.hpp"
#include "mhdshred/eval/metrics.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/mhdsim/simulation.hpp"
#include "mhdshred/shred/model.hpp"

namespace mhdshred::eval {

using dataset::Bundle;
using mhdsim::SnapshotSeries;

/// Physical fields T, ux, uy, uz, p from scaled targets; p includes the
/// hydrostatic component again.
inline std::map<std::string, DenseMatrix> reconstruct_full_state(const Bundle& b, const DenseMatrix& targets) {
    if (targets.cols() != b.target_width())
        throw DimensionError("targets have " + std::to_string(targets.cols()) + " columns, bundle expects " +
                             std::to_string(b.target_width()));
    auto fields = dataset::reconstruct_fields(b, targets);
    fields["p"] = dataset::add_hydrostatic(fields.at("p"), b.rho0, b.gravity, b.centers);
    return fields;
}

inline std::string case_file_name(const std::string& id) { return id + ".csv"; }

struct CaseResult {
    std::string id;
    bool oracle_latents = false;
    std::vector<double> times;
    ErrorSeries T, u, p;                    // physical units, p without hydrostatic part
    ErrorSeries T_norm, u_norm, p_norm;     // min-max normalized fields
    ErrorSeries floor_T, floor_u, floor_p;  // oracle latents (truncation floor), physical units
    double traj_T = 0.0, traj_u = 0.0, traj_p = 0.0;
    std::vector<double> B_hat, B_true;            // tesla
    std::vector<double> B_hat_norm, B_true_norm;  // parameter scaling
    std::optional<ParamMetrics> param;
    double predict_seconds = 0.0;  // predict plus back-projection
    std::map<std::string, DenseMatrix> recon;
};

namespace detail {

inline std::map<std::string, DenseMatrix> model_fields(const Bundle& b, const std::map<std::string, DenseMatrix>& full) {
    std::map<std::string, DenseMatrix> out = full;
    out["p"] = dataset::remove_hydrostatic(full.at("p"), b.rho0, b.gravity, b.centers);
    return out;
}

struct FieldErrors {
    ErrorSeries T, u, p;
    double traj_T, traj_u, traj_p;
};

inline FieldErrors field_errors(const std::map<std::string, DenseMatrix>& truth,
                                const std::map<std::string, DenseMatrix>& recon) {
    const auto& t = truth;
    const auto& r = recon;
    FieldErrors e;
    e.T = relative_l2_error(t.at("T"), r.at("T"));
    e.u = relative_l2_error({&t.at("ux"), &t.at("uy"), &t.at("uz")}, {&r.at("ux"), &r.at("uy"), &r.at("uz")});
    e.p = relative_l2_error(t.at("p"), r.at("p"));
    e.traj_T = trajectory_error({&t.at("T")}, {&r.at("T")});
    e.traj_u = trajectory_error({&t.at("ux"), &t.at("uy"), &t.at("uz")}, {&r.at("ux"), &r.at("uy"), &r.at("uz")});
    e.traj_p = trajectory_error({&t.at("p")}, {&r.at("p")});
    return e;
}

inline std::map<std::string, DenseMatrix> normalized(const Bundle& b, const std::map<std::string, DenseMatrix>& f) {
    std::map<std::string, DenseMatrix> out;
    for (const auto& name : b.fields) out[name] = dataset::normalize_minmax(f.at(name), b.scaling.field(name));
    return out;
}

}  // namespace detail

/// Predicts, reconstructs and scores one trajectory of the bundle against its
/// raw simulator output. With `oracle_latents` the network is bypassed and the
/// projected truth is used instead.
inline CaseResult evaluate_case(const Bundle& b, const shred::ShredModel& model, const SnapshotSeries& truth,
                                const std::string& id, bool oracle_latents = false) {
    const dataset::TrajectoryData& traj = b.trajectory(id);
    if (truth.config.hash() != traj.source_hash)
        throw DataError("snapshot series does not match the bundle source of '" + id + "'");
    if (!(model.scaling == b.scaling) || model.arch.output != b.target_width())
        throw ConfigurationError("model was trained on a different dataset bundle");

    CaseResult res;
    res.id = id;
    res.oracle_latents = oracle_latents;
    res.times = traj.times;

    std::map<std::string, DenseMatrix> truth_model;
    for (const auto& name : b.fields) truth_model[name] = dataset::model_field(truth, name);

    const auto start = std::chrono::steady_clock::now();
    const DenseMatrix targets = oracle_latents ? traj.targets : shred::predict_series(model, traj.sensors);
    res.recon = reconstruct_full_state(b, targets);
    res.predict_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const auto recon_model = detail::model_fields(b, res.recon);
    const auto e = detail::field_errors(truth_model, recon_model);
    res.T = e.T;
    res.u = e.u;
    res.p = e.p;
    res.traj_T = e.traj_T;
    res.traj_u = e.traj_u;
    res.traj_p = e.traj_p;
    const auto en = detail::field_errors(detail::normalized(b, truth_model), detail::normalized(b, recon_model));
    res.T_norm = en.T;
    res.u_norm = en.u;
    res.p_norm = en.p;
    const auto floor = detail::field_errors(truth_model, detail::model_fields(b, reconstruct_full_state(b, traj.targets)));
    res.floor_T = floor.T;
    res.floor_u = floor.u;
    res.floor_p = floor.p;

    if (b.config.param_head) {
        res.B_hat = dataset::unscale_param(b, targets);
        const DenseMatrix bt = dataset::drive_magnitude(truth);
        res.B_true.assign(bt.row(0).begin(), bt.row(0).end());
        const auto& s = b.scaling.param.at(0);
        for (std::size_t k = 0; k < res.B_hat.size(); ++k) {
            res.B_hat_norm.push_back(s.forward(res.B_hat[k]));
            res.B_true_norm.push_back(s.forward(res.B_true[k]));
        }
        res.param = evaluate_param_estimation(res.B_hat_norm, res.B_true_norm, b.config.lag);
    }
    return res;
}

// ---------------------------------------------------------------- reports

inline std::string error_csv_header() {
    return "frame,t,eps_T,eps_u,eps_p,eps_T_norm,eps_u_norm,eps_p_norm,floor_T,floor_u,floor_p,B_hat,B_true";
}

inline void write_case_csv(const CaseResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << error_csv_header() << '\n';
    auto v = [](const ErrorSeries& e, std::size_t k) { return format_double(e.eps[k]); };
    for (std::size_t k = 0; k < r.times.size(); ++k) {
        out << k << ',' << format_double(r.times[k]) << ',' << v(r.T, k) << ',' << v(r.u, k) << ',' << v(r.p, k) << ','
            << v(r.T_norm, k) << ',' << v(r.u_norm, k) << ',' << v(r.p_norm, k) << ',' << v(r.floor_T, k) << ','
            << v(r.floor_u, k) << ',' << v(r.floor_p, k) << ',';
        if (!r.B_hat.empty()) out << format_double(r.B_hat[k]) << ',' << format_double(r.B_true[k]);
        else out << ',';
        out << '\n';
    }
    if (!out) throw FormatError("write failed for " + path.string());
}

/// Deterministic summary of all cases; frames before `burn_in` are excluded
/// from the post-burn-in statistics.
inline KeyValueDoc summary_doc(const std::vector<CaseResult>& results, std::size_t burn_in) {
    KeyValueDoc d;
    d.set("report.convention",
          std::string("relative L2 per frame; physical units with hydrostatic pressure removed; "
                      "velocity uses the joint norm of ux, uy, uz; *_norm columns use min-max normalized fields"));
    d.set("report.burn_in_frames", burn_in);
    d.set("report.case_count", results.size());
    for (const auto& r : results) {
        const std::string p = "case." + r.id;
        d.set(p + ".frames", r.times.size());
        d.set(p + ".oracle_latents", r.oracle_latents);
        auto put = [&](const std::string& name, const ErrorSeries& e) {
            const auto full = series_stats(e.eps), post = series_stats(e.eps, burn_in);
            d.set(p + "." + name + ".max", full.max);
            d.set(p + "." + name + ".mean", full.mean);
            d.set(p + "." + name + ".post_max", post.max);
            d.set(p + "." + name + ".post_mean", post.mean);
            d.set(p + "." + name + ".flagged_frames", e.flagged.size());
        };
        put("eps_T", r.T);
        put("eps_u", r.u);
        put("eps_p", r.p);
        put("eps_T_norm", r.T_norm);
        put("eps_u_norm", r.u_norm);
        put("eps_p_norm", r.p_norm);
        put("floor_T", r.floor_T);
        put("floor_u", r.floor_u);
        put("floor_p", r.floor_p);
        d.set(p + ".trajectory.eps_T", r.traj_T);
        d.set(p + ".trajectory.eps_u", r.traj_u);
        d.set(p + ".trajectory.eps_p", r.traj_p);
        if (r.param) {
            d.set(p + ".param.rmse_full", r.param->rmse_full);
            d.set(p + ".param.rmse_post", r.param->rmse_post);
            d.set(p + ".param.max_dev_post", r.param->max_dev_post);
        }
    }
    return d;
}

/// Writes <id>.csv per case, summary.txt (deterministic) and timings.txt.
inline void campaign_report(const std::vector<CaseResult>& results, const std::filesystem::path& dir,
                            std::size_t burn_in) {
    std::filesystem::create_directories(dir);
    for (const auto& r : results) write_case_csv(r, dir / case_file_name(r.id));
    summary_doc(results, burn_in).save(dir / "summary.txt");
    std::ofstream t(dir / "timings.txt");
    t << "case,predict_and_reconstruct_s\n";
    for (const auto& r : results) t << r.id << ',' << format_double(r.predict_seconds) << '\n';
}

}  // namespace mhdshred::eval
