#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mhdshred/cli/pipeline.hpp"

using namespace mhdshred;
using namespace mhdshred::cli;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mhdshred_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const Log quiet = [](const std::string&) {};

/// Four short runs on an 8x8x8 grid and a small network.
ExperimentConfig tiny_experiment() {
    ExperimentConfig c;
    c.campaign = "tiny";
    c.split = {"tiny",
               {{"Bx0.5", MagneticDrive::toroidal(0.5)}, {"Bx2", MagneticDrive::toroidal(2.0)}},
               {{"Bx1", MagneticDrive::toroidal(1.0)}},
               {{"Bx1.5", MagneticDrive::toroidal(1.5)}}};
    c.sim.geometry.nx = c.sim.geometry.ny = c.sim.geometry.nz = 8;
    c.sim.t_end = 0.5;
    c.dataset.lag = 5;
    c.arch.hidden = 8;
    c.arch.decoder = {16};
    c.train.max_epochs = 3;
    c.train.batch_size = 16;
    c.vtk_time = 0.25;
    return c;
}

}  // namespace

// ------------------------------------------------------------ presets and config

TEST(Presets, CaseCountsMatchCampaignTables) {
    const auto t = preset_config("toroidal");
    EXPECT_EQ(t.split.train.size(), 7u);
    EXPECT_EQ(t.split.val.size(), 2u);
    ASSERT_EQ(t.split.test.size(), 3u);
    EXPECT_EQ(t.split.test[0].drive.Bx, 0.75);
    EXPECT_EQ(t.split.test[1].drive.Bx, 1.85);
    EXPECT_EQ(t.split.test[2].drive.Bx, 2.5);
    for (const auto& c : t.split.train) {
        EXPECT_GE(c.drive.Bx, 0.5);
        EXPECT_LE(c.drive.Bx, 2.0);
    }
    const auto o = preset_config("oscillating");
    EXPECT_EQ(o.split.train.size(), 9u);
    EXPECT_EQ(o.split.val.size(), 4u);
    EXPECT_EQ(o.split.test.size(), 3u);
    EXPECT_EQ(o.vtk_time, 1.75);
    EXPECT_EQ(t.vtk_time, 2.0);
    const auto& a = o.split.test[0].drive;
    EXPECT_EQ(a.A, 0.5);
    EXPECT_NEAR(a.omega, 2.0 * std::numbers::pi / 0.8, 1e-12);
    EXPECT_NEAR(a.phi, std::numbers::pi / 2.0, 1e-15);
    EXPECT_EQ(a.C, 1.2);
    const auto c = preset_config("combined");
    ASSERT_EQ(c.split.test.size(), 1u);
    EXPECT_EQ(c.split.test[0].drive.Bx, 1.6);
    EXPECT_EQ(c.split.test[0].drive.By, 0.45);
    EXPECT_THROW(preset_config("nope"), ConfigurationError);
}

TEST(Config, DocumentRoundTripPreservesHashes) {
    ExperimentConfig c = preset_config("oscillating");
    c.seed = 9;
    c.dataset.rank = 3;
    c.dataset.param_head = true;
    c.arch.decoder = {20, 30};
    c.train.learning_rate = 5e-4;
    apply_grid(c, "12x10x16");
    const ExperimentConfig back = apply_doc(preset_config("toroidal"), KeyValueDoc::parse(c.to_doc().serialize()));
    EXPECT_EQ(back.to_doc().serialize(), c.to_doc().serialize());
    EXPECT_EQ(back.store_hash(), c.store_hash());
    EXPECT_EQ(back.model_hash(), c.model_hash());
}

TEST(Config, StoreHashIgnoresTrainingSettings) {
    ExperimentConfig a = preset_config("toroidal"), b = a;
    b.dataset.rank = 1;
    b.seed = 3;
    b.train.max_epochs = 7;
    EXPECT_EQ(a.store_hash(), b.store_hash());
    EXPECT_NE(a.model_hash(), b.model_hash());
    b.sim.geometry.nz = 16;
    EXPECT_NE(a.store_hash(), b.store_hash());
}

TEST(Config, GridAndKeyErrors) {
    ExperimentConfig c;
    apply_grid(c, "8x9x10");
    EXPECT_EQ(c.sim.geometry.nx, 8);
    EXPECT_EQ(c.sim.geometry.ny, 9);
    EXPECT_EQ(c.sim.geometry.nz, 10);
    EXPECT_THROW(apply_grid(c, "8x9"), UsageError);
    EXPECT_THROW(apply_grid(c, "8xax10"), UsageError);
    EXPECT_THROW(apply_doc(c, KeyValueDoc::parse("[sim]\nbogus = 1\n")), ConfigurationError);
    EXPECT_THROW(apply_doc(c, KeyValueDoc::parse("[sim]\ndrive.Bx = 1\n")), ConfigurationError);
}

// ------------------------------------------------------------ pipeline

TEST(Pipeline, MissingRunsAreListed) {
    const auto out = temp_dir("missing");
    const auto c = tiny_experiment();
    try {
        train_experiment(c, out, quiet);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        for (const char* label : {"Bx0.5 (train", "Bx2 (train", "Bx1 (val", "Bx1.5 (test"})
            EXPECT_NE(msg.find(label), std::string::npos) << msg;
        EXPECT_NE(msg.find("mhdshred generate"), std::string::npos);
    }
    fs::remove_all(out);
}

TEST(Pipeline, GenerateIsIdempotentAndTrainEvaluateExport) {
    const auto out = temp_dir("pipeline");
    auto c = tiny_experiment();
    const auto g1 = generate(c, out, 2, quiet);
    EXPECT_EQ(g1.simulated, 4u);
    const auto p = paths_for(c, out);
    const std::string manifest = read_bytes(p.store / "store_manifest.txt");
    const auto g2 = generate(c, out, 1, quiet);
    EXPECT_EQ(g2.simulated, 0u);
    EXPECT_EQ(g2.reused, 4u);
    EXPECT_EQ(read_bytes(p.store / "store_manifest.txt"), manifest);

    // A corrupted run is regenerated.
    {
        std::ofstream f(p.run("Bx1") / "T.dmx", std::ios::app);
        f << 'x';
    }
    EXPECT_EQ(generate(c, out, 1, quiet).simulated, 1u);
    EXPECT_EQ(read_bytes(p.store / "store_manifest.txt"), manifest);

    // Rank 1 trains and evaluates without error.
    c.dataset.rank = 1;
    const auto t = train_experiment(c, out, quiet);
    EXPECT_EQ(t.result.history.size(), 3u);
    const auto tm = KeyValueDoc::load(t.model_dir / "train_manifest.txt");
    EXPECT_EQ(tm.get("train.store_manifest"), hash_file(p.store / "store_manifest.txt"));
    const auto e = evaluate_experiment(c, out, false, quiet);
    ASSERT_EQ(e.results.size(), 1u);
    EXPECT_EQ(e.results[0].times.size(), 20u);
    EXPECT_EQ(mhdsim::read_csv_rows(e.report_dir / "Bx1.5.csv").size(), 20u);
    ASSERT_EQ(e.vtk_files.size(), 1u);
    EXPECT_TRUE(fs::exists(e.vtk_files[0]));
    EXPECT_NE(e.vtk_files[0].filename().string().find("t0.250"), std::string::npos);
    EXPECT_EQ(KeyValueDoc::load(e.report_dir / "eval_manifest.txt").get("eval.train_manifest"),
              hash_file(t.model_dir / "train_manifest.txt"));

    // Oracle mode equals the truncation floor.
    const auto o = evaluate_experiment(c, out, true, quiet);
    EXPECT_EQ(o.results[0].u.eps, o.results[0].floor_u.eps);

    // Audit of a clean bundle.
    EXPECT_TRUE(audit_experiment(t.model_dir / "bundle", p.store).passed());

    // Export: VTK frame with one value per cell, CSV round trip, bad format.
    const fs::path vtk = out / "T80.vtk";
    export_artifact(p.run("Bx1"), "vtk", "T", 15, vtk);
    const std::string text = read_bytes(vtk);
    EXPECT_NE(text.find("CELL_DATA 512"), std::string::npos);
    const fs::path csv = out / "errors.csv";
    export_artifact(e.report_dir / "Bx1.5.csv", "csv", "T", 0, csv);
    EXPECT_EQ(read_bytes(csv), read_bytes(e.report_dir / "Bx1.5.csv"));
    EXPECT_THROW(export_artifact(p.run("Bx1"), "xyz", "T", 0, out / "x"), UsageError);
    EXPECT_THROW(export_artifact(p.run("Bx1"), "vtk", "T", 20, out / "x"), UsageError);
    EXPECT_THROW(export_artifact(e.report_dir / "Bx1.5.csv", "vtk", "T", 0, out / "x"), UsageError);
    fs::remove_all(out);
}

TEST(Pipeline, FixedSeedGivesIdenticalModelAndReports) {
    const auto out = temp_dir("determinism");
    const auto c = tiny_experiment();
    generate(c, out, 1, quiet);
    const auto a = train_experiment(c, out, quiet);
    const auto b = train_experiment(c, out, quiet, out / "second");
    EXPECT_EQ(read_bytes(a.model_dir / "model.shred"), read_bytes(b.model_dir / "model.shred"));
    const auto ea = evaluate_experiment(c, out, false, quiet);
    const auto eb = evaluate_experiment(c, out, false, quiet, out / "second");
    EXPECT_EQ(read_bytes(ea.report_dir / "summary.txt"), read_bytes(eb.report_dir / "summary.txt"));
    EXPECT_EQ(read_bytes(ea.report_dir / "Bx1.5.csv"), read_bytes(eb.report_dir / "Bx1.5.csv"));
    fs::remove_all(out);
}

TEST(Pipeline, LockRejectsConcurrentWriter) {
    const auto dir = temp_dir("lock");
    {
        DirLock first(dir);
        EXPECT_THROW(DirLock second(dir), UsageError);
    }
    EXPECT_NO_THROW(DirLock again(dir));
    fs::remove_all(dir);
}

TEST(Pipeline, ThresholdViolationsAreReported) {
    eval::CaseResult r;
    r.id = "a";
    r.T.eps = {0.5, 0.01, 0.02};
    r.u.eps = {0.9, 0.05, 0.2};
    r.p.eps = {0.0, 0.0, 0.0};
    Thresholds t{0.05, 0.1, 0.01, std::nullopt, {}};
    const auto v = check_thresholds(t, {r}, 1);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].metric, "eps_u");
    EXPECT_EQ(v[0].value, 0.2);
    t.cases = {"b"};
    EXPECT_TRUE(check_thresholds(t, {r}, 1).empty());
    EXPECT_EQ(frame_at({0.025, 0.05, 0.075}, 0.051), 1u);
}
