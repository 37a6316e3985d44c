// Acceptance runner: evaluates criteria 1-10 and prints one PASS/FAIL line per
// criterion. Exits 0 once every criterion has been evaluated; with --strict
// the exit code is nonzero when any criterion fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mhdshred/cli/pipeline.hpp"
#include "mhdshred/linalg/svd.hpp"
#include "mhdshred/mhdsim/electromagnetics.hpp"
#include "mhdshred/mhdsim/momentum.hpp"
#include "mhdshred/mhdsim/simulation.hpp"
#include "mhdshred/shred/io.hpp"
#include "mhdshred/shred/model.hpp"
#include "../support/reference_shred.hpp"

using namespace mhdshred;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

struct Verdict {
    bool pass = true;
    std::string detail;

    /// Records one check; every check appears in the detail line.
    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        detail += (detail.empty() ? "" : "; ") + what + (ok ? "" : " [violated]");
    }
};

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void log_indented(const std::string& s) { std::cout << "    " << s << std::endl; }

// ------------------------------------------------------------ 1: SVD

Verdict svd_correctness() {
    const auto t0 = Clock::now();
    Verdict v;
    double worst_energy = 0.0, worst_orth = 0.0;
    std::size_t largest_m = 0, largest_n = 0;
    for (unsigned i = 0; i < 50; ++i) {
        const std::size_t m = i == 0 ? 500 : 20 + (i * 97) % 481;
        const std::size_t n = i == 0 ? 200 : 5 + (i * 53) % 196;
        std::mt19937_64 rng(1000 + i);
        std::normal_distribution<double> dist;
        const bool wide = i % 3 == 1;
        linalg::DenseMatrix a(wide ? n : m, wide ? m : n);
        for (double& x : a.data()) x = dist(rng);
        largest_m = std::max(largest_m, m);
        largest_n = std::max(largest_n, n);
        const std::size_t r = 1 + (i * 7) % std::min({m, n, std::size_t{40}});
        const auto res = linalg::truncated_svd(a, r);

        Eigen::MatrixXd e(a.rows(), a.cols());
        for (std::size_t p = 0; p < a.rows(); ++p)
            for (std::size_t q = 0; q < a.cols(); ++q) e(p, q) = a(p, q);
        Eigen::BDCSVD<Eigen::MatrixXd> full(e);
        double tail = 0.0;
        for (Eigen::Index k = static_cast<Eigen::Index>(r); k < full.singularValues().size(); ++k)
            tail += full.singularValues()[k] * full.singularValues()[k];

        Eigen::MatrixXd U(a.rows(), r), Vt(r, a.cols());
        for (std::size_t p = 0; p < a.rows(); ++p)
            for (std::size_t k = 0; k < r; ++k) U(p, k) = res.basis.U(p, k);
        for (std::size_t k = 0; k < r; ++k)
            for (std::size_t q = 0; q < a.cols(); ++q) Vt(k, q) = res.Vt(k, q) * res.basis.sigma[k];
        const double err = (e - U * Vt).squaredNorm();
        worst_energy = std::max(worst_energy, std::abs(err - tail) / tail);
        worst_orth = std::max(worst_orth,
                              (U.transpose() * U - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff());
    }
    const double secs = seconds_since(t0);
    v.check(worst_energy <= 1e-8, "Eckart-Young relative deviation " + fmt(worst_energy) + " <= 1e-8");
    v.check(worst_orth <= 1e-10, "max |U^T U - I| " + fmt(worst_orth) + " <= 1e-10");
    v.check(secs < 60.0, "50 matrices up to " + std::to_string(largest_m) + "x" + std::to_string(largest_n) + " in " +
                             fmt(secs, 3) + " s < 60 s");
    return v;
}

// ------------------------------------------------------------ 2: gradients

Verdict gradient_fidelity() {
    const auto t0 = Clock::now();
    shred::Architecture a;
    a.hidden = 8;
    a.lag = 5;
    a.n_sensors = 2;
    a.decoder = {10, 12};
    a.output = 3;
    const shred::ShredModel m = shred::make_model(a, 24);
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    shred::Window x(5, shred::Mat(2, 4));
    for (auto& s : x)
        for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
    shred::Mat t(3, 4);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
    const auto r = testing::check_gradients(m, x, t, 1e-6);
    const auto strict = testing::check_gradients(m, x, t, 1e-6, 0.0);
    Verdict v;
    v.check(r.worst < 1e-5, "worst relative error " + fmt(r.worst) + " < 1e-5 over " + std::to_string(r.checked) +
                                " parameters (" + fmt(strict.worst) + " without denominator floor)");
    v.check(seconds_since(t0) < 60.0, "runtime " + fmt(seconds_since(t0), 3) + " s < 60 s");
    return v;
}

// ------------------------------------------------------------ 3: simulator physics

Verdict simulator_physics() {
    using namespace mhdsim;
    const auto t0 = Clock::now();
    Verdict v;

    {  // (a) zero field, no pipe, no gravity: steady
        SimConfig cfg;
        cfg.geometry.nx = cfg.geometry.ny = cfg.geometry.nz = 8;
        cfg.geometry.pipe_radius = 0.0;
        cfg.gravity = {0.0, 0.0, 0.0};
        cfg.drive = MagneticDrive::toroidal(0.0);
        cfg.t_end = 0.5;
        const auto s = run_simulation(cfg);
        double drift = 0.0;
        for (const auto& name : snapshot_field_names()) {
            const auto& f = s.field(name);
            for (std::size_t r = 0; r < f.rows(); ++r)
                for (std::size_t c = 0; c < f.cols(); ++c) drift = std::max(drift, std::abs(f(r, c) - f(r, 0)));
        }
        v.check(drift <= 1e-10, "(a) steady drift " + fmt(drift) + " <= 1e-10");
    }
    {  // (b) divergence every step on the desk grid, and B divergence in full induction
        SimConfig cfg;
        cfg.drive = MagneticDrive::toroidal(2.0);
        cfg.t_end = 0.25;
        double worst = 0.0;
        std::size_t steps = 0;
        RunOptions opts;
        opts.on_step = [&](const FluidState&, const ProjectionReport& rep) {
            worst = std::max(worst, rep.divergence);
            ++steps;
        };
        run_simulation(cfg, opts);
        v.check(worst <= 1e-8, "(b) max velocity divergence " + fmt(worst) + " <= 1e-8 over " + std::to_string(steps) +
                                   " steps");

        SimConfig full;
        full.geometry.nx = full.geometry.ny = full.geometry.nz = 8;
        full.drive = MagneticDrive::toroidal(0.5);
        full.induction_mode = InductionMode::Full;
        full.t_end = 4e-5;
        full.store_dt = 1e-5;
        const Grid g = build_grid(full.geometry);
        double bdiv = 0.0;
        std::size_t bsteps = 0;
        RunOptions fo;
        fo.on_step = [&](const FluidState& s, const ProjectionReport&) {
            bdiv = std::max(bdiv, normalized_divergence(g, s.B));
            ++bsteps;
        };
        run_simulation(full, fo);
        v.check(bdiv <= 1e-10 && bsteps > 0,
                "(b) max B divergence " + fmt(bdiv) + " <= 1e-10 over " + std::to_string(bsteps) + " steps");
    }
    {  // (c) Hartmann channel at Ha = 10
        Geometry geo;
        geo.nx = 8;
        geo.ny = 128;
        geo.nz = 1;
        geo.pipe_radius = 0.0;
        const double dy = geo.side / geo.ny;
        const Grid g = build_masked_grid(geo, [&](const Vec3& x) { return std::abs(x[1]) > 0.5 * geo.side - dy; });
        const MaterialProps m;
        const double half = 0.5 * geo.side - dy;
        const double ha = 10.0;
        const double b = ha / (half * std::sqrt(m.sigma_el / m.mu_visc));
        const double G = 1e-4 * m.sigma_el * b * b;
        const MomentumSolver mom(g, m, {{0.0, 0.0, 0.0}, G, 0.0, 0.5});
        const QuasiStaticCurrent qs(g, ElectricWalls::Conducting);
        FluidState s;
        s.u = FaceVelocity(g);
        s.T.assign(g.cell_count(), 600.0);
        s.p.assign(g.cell_count(), 0.0);
        s.rho.assign(g.cell_count(), m.rho0);
        s.B = CellVectorField(g);
        const double dt = 0.9 * std::min(mom.dt_limit(s.u), m.rho0 / (m.sigma_el * b * b));
        for (int n = 0; n < 20000; ++n) {
            const auto forces = qs.compute(cell_velocity(g, s.u), {0.0, b, 0.0}, m);
            const auto before = s.u.component(2);
            mom.step(s, dt, forces);
            double change = 0.0;
            const auto& after = s.u.component(2);
            for (std::size_t i = 0; i < after.size(); ++i) change = std::max(change, std::abs(after[i] - before[i]));
            if (change < 1e-18) break;
        }
        const int i = g.nx() / 2;
        double num = 0.0, den = 0.0, err = 0.0, norm = 0.0;
        std::vector<std::pair<double, double>> prof;
        for (int j = 1; j < g.ny() - 1; ++j) {
            const double shape = 1.0 - std::cosh(ha * g.center(i, j, 0)[1] / half) / std::cosh(ha);
            prof.emplace_back(s.u(2, i, j, 0), shape);
            num += s.u(2, i, j, 0) * shape;
            den += shape * shape;
        }
        const double amp = num / den;
        for (const auto& [w, shape] : prof) {
            err += (w - amp * shape) * (w - amp * shape);
            norm += w * w;
        }
        const double rel = std::sqrt(err / norm);
        const double amp_err = std::abs(amp - G / (m.sigma_el * b * b)) / (G / (m.sigma_el * b * b));
        v.check(rel <= 0.02, "(c) Hartmann profile L2 deviation " + fmt(rel) + " <= 0.02");
        v.check(amp_err <= 0.03, "(c) core velocity within " + fmt(amp_err) + " <= 3% of G/(sigma B^2)");
    }
    {  // (d) maximum principle without Joule heating
        SimConfig cfg;
        cfg.drive = MagneticDrive::toroidal(2.0);
        cfg.joule_heating = false;
        cfg.t_end = 0.5;
        double lo = 1e300, hi = -1e300;
        RunOptions opts;
        opts.on_step = [&](const FluidState& s, const ProjectionReport&) {
            for (double t : s.T) {
                lo = std::min(lo, t);
                hi = std::max(hi, t);
            }
        };
        run_simulation(cfg, opts);
        v.check(lo >= cfg.T_pipe - 1e-9 && hi <= cfg.T0 + 1e-9,
                "(d) T stays in [" + fmt(lo, 8) + ", " + fmt(hi, 8) + "] within [560, 600]");
    }
    const double secs = seconds_since(t0);
    v.check(secs < 300.0, "runtime " + fmt(secs, 3) + " s < 300 s");
    return v;
}

// ------------------------------------------------------------ campaigns

struct CampaignRun {
    cli::ExperimentConfig config;
    cli::GenerateResult gen;
    cli::TrainOutcome train;
    cli::EvaluateOutcome eval;
    cli::EvaluateOutcome oracle;
    double total_seconds = 0.0;
    std::size_t burn_in = 30;

    const eval::CaseResult& result(const std::string& id) const {
        for (const auto& r : eval.results)
            if (r.id == id) return r;
        throw DataError("no result for " + id);
    }
    const eval::CaseResult& floor(const std::string& id) const {
        for (const auto& r : oracle.results)
            if (r.id == id) return r;
        throw DataError("no oracle result for " + id);
    }
};

CampaignRun run_campaign(const std::string& preset, bool param_head, const fs::path& out) {
    CampaignRun c;
    c.config = cli::preset_config(preset);
    c.config.dataset.param_head = param_head;
    c.burn_in = c.config.dataset.lag;
    std::cout << "  campaign " << preset << std::endl;
    const auto t0 = Clock::now();
    c.gen = cli::generate(c.config, out, 1, log_indented);
    c.train = cli::train_experiment(c.config, out, log_indented);
    c.eval = cli::evaluate_experiment(c.config, out, false, log_indented);
    c.total_seconds = seconds_since(t0);
    c.oracle = cli::evaluate_experiment(c.config, out, true, [](const std::string&) {});
    return c;
}

double post_max(const eval::ErrorSeries& e, std::size_t burn) { return eval::series_stats(e.eps, burn).max; }
double post_mean(const eval::ErrorSeries& e, std::size_t burn) { return eval::series_stats(e.eps, burn).mean; }

/// Field-error checks of one test case after the burn-in.
void check_case(Verdict& v, const CampaignRun& c, const std::string& id, double lim_T, double lim_u, double lim_p) {
    const auto& r = c.result(id);
    const auto& f = c.floor(id);
    const std::size_t b = c.burn_in;
    v.check(post_max(r.T, b) <= lim_T, id + " eps_T " + fmt(post_max(r.T, b)) + " <= " + fmt(lim_T) + " (floor " +
                                           fmt(post_max(f.T, b)) + ")");
    v.check(post_max(r.u, b) <= lim_u, id + " eps_u " + fmt(post_max(r.u, b)) + " <= " + fmt(lim_u) + " (floor " +
                                           fmt(post_max(f.u, b)) + ")");
    v.check(post_max(r.p, b) <= lim_p, id + " eps_p " + fmt(post_max(r.p, b)) + " <= " + fmt(lim_p) + " (floor " +
                                           fmt(post_max(f.p, b)) + ")");
}

/// Normalized-field errors, printed for reference next to the verdicts.
void print_normalized(const CampaignRun& c) {
    for (const auto& r : c.eval.results)
        std::cout << "    " << r.id << " normalized-field post-burn-in max: eps_T " << fmt(post_max(r.T_norm, c.burn_in))
                  << ", eps_u " << fmt(post_max(r.u_norm, c.burn_in)) << ", eps_p "
                  << fmt(post_max(r.p_norm, c.burn_in)) << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    fs::path work = fs::temp_directory_path() / "mhdshred_acceptance";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--strict") strict = true;
        else if (a == "--work" && i + 1 < argc) work = argv[++i];
        else {
            std::cerr << "usage: acceptance [--strict] [--work DIR]\n";
            return 2;
        }
    }
    fs::remove_all(work);
    fs::create_directories(work);

    std::vector<std::pair<int, Verdict>> verdicts;
    auto run = [&](int id, const std::function<Verdict()>& fn) {
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        std::cout << "CRITERION " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
        verdicts.emplace_back(id, v);
    };

    run(1, svd_correctness);
    run(2, gradient_fidelity);
    run(3, simulator_physics);

    std::optional<CampaignRun> tor, comb, osc;
    try {
        tor = run_campaign("toroidal", false, work);
        print_normalized(*tor);
        comb = run_campaign("combined", false, work);
        print_normalized(*comb);
        osc = run_campaign("oscillating", true, work);
        print_normalized(*osc);
    } catch (const std::exception& e) {
        std::cout << "campaign failed: " << e.what() << std::endl;
    }
    auto need = [](const std::optional<CampaignRun>& c) -> const CampaignRun& {
        if (!c) throw DataError("campaign did not complete");
        return *c;
    };

    run(4, [&] {
        const auto& c = need(tor);
        Verdict v;
        for (const std::string id : {"Bx0.75", "Bx1.85"}) check_case(v, c, id, 0.06, 0.10, 0.05);
        return v;
    });
    run(5, [&] {
        const auto& c = need(tor);
        Verdict v;
        const std::size_t b = c.burn_in;
        const auto& a = c.result("Bx0.75");
        const auto& m = c.result("Bx1.85");
        const auto& x = c.result("Bx2.5");
        auto ratio = [&](const std::string& name, const eval::ErrorSeries& ea, const eval::ErrorSeries& em,
                         const eval::ErrorSeries& ex) {
            const double in = 0.5 * (post_mean(ea, b) + post_mean(em, b));
            v.check(post_mean(ex, b) <= 2.0 * in,
                    name + " mean at 2.5 T " + fmt(post_mean(ex, b)) + " <= 2 x in-range " + fmt(in));
        };
        ratio("eps_T", a.T, m.T, x.T);
        ratio("eps_u", a.u, m.u, x.u);
        ratio("eps_p", a.p, m.p, x.p);
        return v;
    });
    run(6, [&] {
        Verdict v;
        check_case(v, need(comb), "Bx1.6_By0.45", 0.06, 0.06, 0.05);
        return v;
    });
    run(7, [&] {
        const auto& c = need(osc);
        Verdict v;
        for (const std::string id : {"testA", "testB", "testC"}) {
            check_case(v, c, id, 0.08, 0.06, 0.06);
            const auto& r = c.result(id);
            double spike = 0.0;
            for (std::size_t k = 0; k < c.burn_in && k < r.u.eps.size(); ++k) spike = std::max(spike, r.u.eps[k]);
            v.detail += "; " + id + " burn-in eps_u peak " + fmt(spike) + " (reported)";
        }
        return v;
    });
    run(8, [&] {
        const auto& c = need(osc);
        Verdict v;
        for (const std::string id : {"testA", "testB", "testC"}) {
            const auto& r = c.result(id);
            if (!r.param) throw ConfigurationError("no parameter estimate for " + id);
            v.check(r.param->rmse_post <= 0.10,
                    id + " normalized B RMSE after burn-in " + fmt(r.param->rmse_post) + " <= 0.10 (full window " +
                        fmt(r.param->rmse_full) + ")");
        }
        return v;
    });
    run(9, [&] {
        const auto& c = need(tor);
        Verdict v;
        double worst = 0.0;
        for (const auto& r : c.eval.results) worst = std::max(worst, r.predict_seconds);
        v.check(worst < 1.0, "predict + back-projection of a 120-frame case " + fmt(worst, 3) + " s < 1 s");
        v.check(c.total_seconds <= 1800.0,
                "toroidal end-to-end (" + std::to_string(c.gen.simulated) + " runs generated, train, evaluate) " +
                    fmt(c.total_seconds, 4) + " s <= 1800 s");
        v.check(c.train.total_seconds <= 600.0,
                "toroidal training " + fmt(c.train.total_seconds, 4) + " s <= 600 s");
        return v;
    });
    run(10, [&] {
        const auto& c = need(comb);
        Verdict v;
        // Retrain with the same seed into a second directory and compare bytes.
        const fs::path alt = work / "determinism";
        cli::train_experiment(c.config, work, [](const std::string&) {}, alt);
        v.check(read_bytes(alt / "model.shred") == read_bytes(c.train.model_dir / "model.shred"),
                "retrained model file identical");
        const auto e2 = cli::evaluate_experiment(c.config, work, false, [](const std::string&) {}, alt);
        bool same = read_bytes(e2.report_dir / "summary.txt") == read_bytes(c.eval.report_dir / "summary.txt");
        for (const auto& r : e2.results)
            same = same && read_bytes(e2.report_dir / eval::case_file_name(r.id)) ==
                               read_bytes(c.eval.report_dir / eval::case_file_name(r.id));
        v.check(same, "reports identical");

        // Save/load round trips.
        const auto model = shred::load_model(c.train.model_dir / "model.shred");
        v.check(shred::serialize_model(model) == read_bytes(c.train.model_dir / "model.shred"),
                "model save/load bitwise");
        const auto bundle = dataset::load_bundle(c.train.model_dir / "bundle");
        const fs::path copy = work / "bundle_copy";
        dataset::save_bundle(bundle, copy);
        bool bundle_same = true;
        for (const auto& e : fs::recursive_directory_iterator(c.train.model_dir / "bundle"))
            if (e.is_regular_file()) {
                const auto rel = fs::relative(e.path(), c.train.model_dir / "bundle");
                bundle_same = bundle_same && read_bytes(e.path()) == read_bytes(copy / rel);
            }
        v.check(bundle_same, "bundle save/load bitwise");

        // Leakage audit of every campaign bundle.
        for (const auto* run : {&need(tor), &c, &need(osc)}) {
            const auto rep = cli::audit_experiment(run->train.model_dir / "bundle",
                                                   cli::paths_for(run->config, work).store);
            std::size_t failed = 0;
            for (const auto& ch : rep.checks) failed += !ch.passed;
            v.check(rep.passed(), "audit " + run->config.campaign + " (" + std::to_string(rep.checks.size()) +
                                      " checks, " + std::to_string(failed) + " failed)");
        }
        return v;
    });

    std::cout << "\nSUMMARY\n";
    int failed = 0;
    for (const auto& [id, v] : verdicts) {
        std::cout << "CRITERION " << id << ": " << (v.pass ? "PASS" : "FAIL") << '\n';
        failed += !v.pass;
    }
    std::cout << (10 - failed) << "/10 criteria passed" << std::endl;
    return strict && failed ? 1 : 0;
}
