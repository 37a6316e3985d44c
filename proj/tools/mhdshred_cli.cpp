#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "mhdshred/cli/pipeline.hpp"

using namespace mhdshred;
namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitThreshold = 3;

struct CommonFlags {
    std::string config;
    std::string preset = "toroidal";
    std::optional<std::uint64_t> seed;
    std::string grid;
    std::optional<std::size_t> rank;
    bool param_estimation = false;
    std::string out = "runs";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "Experiment configuration file (key = value with [sections])");
    cmd->add_option("--preset", f.preset, "Campaign preset: toroidal, combined or oscillating")
        ->check(CLI::IsMember({"toroidal", "combined", "oscillating"}));
    cmd->add_option("--seed", f.seed, "Seed for network initialization and shuffling");
    cmd->add_option("--grid", f.grid, "Grid resolution NXxNYxNZ (default 16x16x32)");
    cmd->add_option("--rank", f.rank, "SVD rank per field");
    cmd->add_flag("--param-estimation", f.param_estimation, "Add the drive magnitude |B0(t)| as a network output");
    cmd->add_option("--out", f.out, "Output root directory");
}

/// Preset, then config file, then command-line flags.
cli::ExperimentConfig resolve(const CommonFlags& f) {
    cli::ExperimentConfig c = cli::preset_config(f.preset);
    if (!f.config.empty()) {
        if (!fs::exists(f.config)) throw UsageError("config file " + f.config + " does not exist");
        c = cli::apply_doc(c, KeyValueDoc::load(f.config));
    }
    if (f.seed) c.seed = *f.seed;
    if (!f.grid.empty()) cli::apply_grid(c, f.grid);
    if (f.rank) c.dataset.rank = *f.rank;
    if (f.param_estimation) c.dataset.param_head = true;
    c.validate();
    return c;
}

void log_line(const std::string& s) { std::cout << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-sensor reconstruction of MHD blanket flows with shallow recurrent decoders"};
    app.require_subcommand(1);

    CommonFlags gen_f, train_f, eval_f, audit_f;
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    auto* gen = app.add_subcommand("generate", "Simulate every case of the campaign (skips current runs)");
    add_common(gen, gen_f);
    gen->add_option("--jobs", jobs, "Parallel simulations");

    auto* train = app.add_subcommand("train", "Build the dataset bundle and train a model");
    add_common(train, train_f);

    bool oracle = false;
    std::optional<double> vtk_time;
    auto* evaluate = app.add_subcommand("evaluate", "Reconstruct the test cases and write reports");
    add_common(evaluate, eval_f);
    evaluate->add_flag("--oracle-latents", oracle, "Use projected truth instead of the network (truncation floor)");
    evaluate->add_option("--vtk-time", vtk_time, "Time of the exported VTK frames in seconds");

    std::string source, format = "vtk", field = "T", dest;
    std::size_t frame = 80;
    auto* exp = app.add_subcommand("export", "Export a stored field frame or a report CSV");
    exp->add_option("source", source, "Run directory or report CSV")->required();
    exp->add_option("--format", format, "vtk or csv");
    exp->add_option("--field", field, "Field name: T, ux, uy, uz or p");
    exp->add_option("--frame", frame, "Frame index");
    exp->add_option("--out", dest, "Destination file")->required();

    std::string bundle_dir;
    auto* audit = app.add_subcommand("audit", "Verify that scaling and bases use no test data");
    add_common(audit, audit_f);
    audit->add_option("--bundle", bundle_dir, "Bundle directory (default: the configured model's bundle)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) {
            const auto c = resolve(gen_f);
            const auto r = cli::generate(c, gen_f.out, jobs, log_line);
            std::cout << "store " << cli::paths_for(c, gen_f.out).store.string() << ": " << r.simulated
                      << " simulated, " << r.reused << " reused, " << format_double(std::round(r.seconds * 10) / 10)
                      << " s\n";
        } else if (*train) {
            const auto c = resolve(train_f);
            const auto r = cli::train_experiment(c, train_f.out, log_line);
            std::cout << "model " << (r.model_dir / "model.shred").string() << ": " << r.parameters << " parameters, "
                      << r.result.history.size() << " epochs, best epoch " << r.result.best_epoch << " (val "
                      << format_double(r.result.best_val) << ")\n"
                      << "total wall time " << format_double(std::round(r.total_seconds * 10) / 10) << " s\n";
        } else if (*evaluate) {
            auto c = resolve(eval_f);
            if (vtk_time) c.vtk_time = *vtk_time;
            const auto r = cli::evaluate_experiment(c, eval_f.out, oracle, log_line);
            std::cout << "report " << r.report_dir.string() << '\n';
            for (const auto& v : r.violations)
                std::cout << "threshold violated: " << v.case_id << ' ' << v.metric << " = " << format_double(v.value)
                          << " > " << format_double(v.limit) << '\n';
            if (!r.violations.empty()) return kExitThreshold;
        } else if (*exp) {
            cli::export_artifact(source, format, field, frame, dest);
            std::cout << "wrote " << dest << '\n';
        } else if (*audit) {
            const auto c = resolve(audit_f);
            const auto p = cli::paths_for(c, audit_f.out);
            const fs::path dir = bundle_dir.empty() ? p.model_dir(c) / "bundle" : fs::path(bundle_dir);
            if (!fs::exists(dir / "split_manifest.txt"))
                throw DataError("no dataset bundle in " + dir.string() + "; run `mhdshred train` first");
            const auto rep = cli::audit_experiment(dir, p.store);
            for (const auto& ch : rep.checks)
                std::cout << (ch.passed ? "ok    " : "FAIL  ") << ch.name << (ch.detail.empty() ? "" : ": ")
                          << ch.detail << '\n';
            if (!rep.passed()) return kExitError;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return 0;
}
