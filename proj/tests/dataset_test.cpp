#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "mhdshred/dataset/bundle.hpp"
#include "mhdshred/dataset/preprocess.hpp"
#include "mhdshred/dataset/scaling.hpp"
#include "mhdshred/dataset/splits.hpp"
#include "support/synthetic.hpp"

using namespace mhdshred;
using namespace mhdshred::dataset;
using mhdsim::Grid;
using mhdsim::SimConfig;
using namespace mhdshred::testing;

namespace {

constexpr double kPi = std::numbers::pi;

DenseMatrix random_matrix(std::size_t r, std::size_t c, unsigned seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    DenseMatrix m(r, c);
    for (double& v : m.data()) v = u(rng);
    return m;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mhdshred_dataset_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

// ------------------------------------------------------------ hydrostatic

TEST(Hydrostatic, ZeroGravityIsIdentity) {
    const DenseMatrix p = random_matrix(4, 3, 1, 9e4, 1.1e5);
    const std::vector<Vec3> x = {{0, 0, 0}, {0.01, 0, 0}, {0, 0.01, 0}, {0, 0, 0.05}};
    EXPECT_EQ(remove_hydrostatic(p, 1000.0, {0, 0, 0}, x), p);
}

TEST(Hydrostatic, HydrostaticColumnBecomesConstant) {
    const double rho0 = 9720.0;
    const Vec3 g{0.0, -9.81, 0.0};
    std::vector<Vec3> x;
    DenseMatrix p(11, 2);
    for (std::size_t i = 0; i < 11; ++i) {
        x.push_back({0.0, -0.01 + 0.002 * static_cast<double>(i), 0.0});
        for (std::size_t k = 0; k < 2; ++k) p(i, k) = 1e5 + rho0 * g[1] * x[i][1];
    }
    const DenseMatrix q = remove_hydrostatic(p, rho0, g, x);
    for (double v : q.data()) EXPECT_NEAR(v, 1e5, 1e-9);
}

TEST(Hydrostatic, GravityThenReverseRoundTrips) {
    const DenseMatrix p = random_matrix(5, 4, 2, 9e4, 1.1e5);
    std::vector<Vec3> x;
    for (int i = 0; i < 5; ++i) x.push_back({0.001 * i, -0.002 * i, 0.01 * i});
    const Vec3 g{0.3, -9.81, 0.1};
    const DenseMatrix back = remove_hydrostatic(remove_hydrostatic(p, 9720.0, g, x), 9720.0, {-0.3, 9.81, -0.1}, x);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(back.data()[i], p.data()[i], 1e-12 * 1e5);
}

TEST(Hydrostatic, CoordinateCountMismatchThrows) {
    EXPECT_THROW(remove_hydrostatic(DenseMatrix(3, 2), 1.0, {0, -1, 0}, {{0, 0, 0}}), DimensionError);
}

// ------------------------------------------------------------ scaling

TEST(Scaling, EndpointsMapToZeroAndOne) {
    const MinMax s{"T", 560.0, 600.0};
    EXPECT_EQ(s.forward(560.0), 0.0);
    EXPECT_EQ(s.forward(600.0), 1.0);
    const DenseMatrix m{{560.0, 600.0}};
    const DenseMatrix n = normalize_minmax(m, fit_minmax("T", {&m}));
    EXPECT_EQ(n(0, 0), 0.0);
    EXPECT_EQ(n(0, 1), 1.0);
}

TEST(Scaling, ConstantChannelRaisesNamedError) {
    const DenseMatrix m(3, 4, 7.0);
    try {
        fit_minmax("uy", {&m});
        FAIL() << "expected ScalingError";
    } catch (const ScalingError& e) {
        EXPECT_NE(std::string(e.what()).find("uy"), std::string::npos);
    }
    EXPECT_THROW(normalize_minmax(m, MinMax{"p", 1.0, 1.0}), ScalingError);
}

TEST(Scaling, RoundTripIsIdentity) {
    const DenseMatrix m = random_matrix(30, 20, 3, 550.0, 610.0);
    const MinMax s = fit_minmax("T", {&m});
    const DenseMatrix n = normalize_minmax(m, s);
    for (double v : n.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    const DenseMatrix back = denormalize_minmax(n, s);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(back.data()[i], m.data()[i], 1e-12 * 610.0);
}

TEST(Scaling, OutOfRangeDataIsNotClipped) {
    const MinMax s{"T", 0.0, 1.0};
    EXPECT_EQ(s.forward(1.5), 1.5);
    EXPECT_EQ(s.forward(-0.25), -0.25);
}

TEST(Scaling, KeyValueRoundTripIsBitwise) {
    ScalingParams s;
    s.fields = {{"T", 560.123456789, 600.0 + 1.0 / 3.0}, {"p", -17.25, 1e-7}};
    s.latent = {{"T.mode0", -1.0 / 7.0, 2.0 / 3.0}};
    s.param = {{"B", 0.6, 1.8}};
    const auto back = ScalingParams::from_keyvalue(KeyValueDoc::parse(s.to_keyvalue().serialize()));
    EXPECT_EQ(back, s);
}

// ------------------------------------------------------------ stacking

TEST(Stacking, SingleTrajectoryIsUnchanged) {
    const DenseMatrix a = random_matrix(10, 7, 4);
    const StackedMatrix s = stack_parametric({&a});
    EXPECT_EQ(s.X, a);
    ASSERT_EQ(s.blocks.size(), 1u);
    EXPECT_EQ(s.blocks[0].count, 7u);
}

TEST(Stacking, BlocksKeepOrder) {
    const DenseMatrix a = random_matrix(100, 120, 5), b = random_matrix(100, 120, 6);
    const StackedMatrix s = stack_parametric({&a, &b});
    EXPECT_EQ(s.X.rows(), 100u);
    EXPECT_EQ(s.X.cols(), 240u);
    EXPECT_EQ(linalg::column_block(s.X, 0, 120), a);
    EXPECT_EQ(linalg::column_block(s.X, 120, 120), b);
    EXPECT_EQ(s.blocks[1].trajectory, 1u);
    EXPECT_EQ(s.blocks[1].first, 120u);
}

TEST(Stacking, RowMismatchThrows) {
    const DenseMatrix a(10, 3), b(11, 3);
    EXPECT_THROW(stack_parametric({&a, &b}), DimensionError);
}

TEST(Stacking, BlockErrorBoundedByGlobalTruncation) {
    // Projection error of any block through the global basis is at most the
    // global discarded energy (sum of squared discarded singular values).
    const std::size_t r = 4;
    std::vector<DenseMatrix> blocks;
    for (unsigned t = 0; t < 3; ++t) {
        DenseMatrix lowrank = linalg::matmul(random_matrix(60, 6, 10 + t), random_matrix(6, 25, 20 + t));
        const DenseMatrix noise = random_matrix(60, 25, 30 + t, -0.01, 0.01);
        for (std::size_t i = 0; i < lowrank.size(); ++i) lowrank.data()[i] += noise.data()[i];
        blocks.push_back(std::move(lowrank));
    }
    const StackedMatrix s = stack_parametric({&blocks[0], &blocks[1], &blocks[2]});
    const auto full = linalg::truncated_svd(s.X, 60);
    double discarded = 0.0;
    for (std::size_t i = r; i < full.basis.sigma.size(); ++i) discarded += full.basis.sigma[i] * full.basis.sigma[i];
    const auto basis = linalg::truncated_svd(s.X, r).basis;
    for (const auto& b : blocks) {
        const DenseMatrix err = b - linalg::reconstruct(basis, linalg::project(basis, b));
        const double e2 = linalg::frobenius_norm(err) * linalg::frobenius_norm(err);
        EXPECT_LE(e2, discarded * (1.0 + 1e-9));
    }
}

// ------------------------------------------------------------ sensors

TEST(Sensors, ExactCellCenterReturnsThatSeries) {
    const Grid g = mhdsim::build_grid(small_geometry());
    const std::size_t cell = g.fluid_cells()[5];
    SensorSpec spec;
    spec.positions = {g.center(cell)};
    spec = resolve_sensors(g, spec);
    ASSERT_EQ(spec.cells.size(), 1u);
    EXPECT_EQ(spec.cells[0], cell);
    const DenseMatrix field = random_matrix(g.fluid_count(), 9, 7);
    const DenseMatrix series = extract_sensor_series(field, spec);
    EXPECT_EQ(series.rows(), 9u);
    for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(series(k, 0), field(5, k));
}

TEST(Sensors, DefaultPositionsResolveToDistinctFluidCells) {
    const Grid g = mhdsim::build_grid(mhdsim::Geometry{});
    const SensorSpec spec = resolve_sensors(g, SensorSpec{});
    ASSERT_EQ(spec.cells.size(), 3u);
    EXPECT_EQ(std::set<std::size_t>(spec.cells.begin(), spec.cells.end()).size(), 3u);
    for (std::size_t c : spec.cells) EXPECT_FALSE(g.solid(c));
    EXPECT_EQ(spec.field, "T");
}

TEST(Sensors, PipeAxisIsRejected) {
    const Grid g = mhdsim::build_grid(mhdsim::Geometry{});
    SensorSpec spec;
    spec.positions = {{0.0, 0.0, 0.03}};
    EXPECT_THROW(resolve_sensors(g, spec), SensorPlacementError);
}

TEST(Sensors, PipeEdgeFallsBackToFluidNeighbour) {
    const Grid g = mhdsim::build_grid(mhdsim::Geometry{});
    SensorSpec spec;
    spec.positions = {{0.0049, 0.0, 0.03}};
    spec = resolve_sensors(g, spec);
    EXPECT_FALSE(g.solid(spec.cells[0]));
    EXPECT_GT(g.center(spec.cells[0])[0], 0.0049);
}

TEST(Sensors, OutsideDomainAndDuplicatesAreRejected) {
    const Grid g = mhdsim::build_grid(mhdsim::Geometry{});
    SensorSpec outside;
    outside.positions = {{0.02, 0.0, 0.03}};
    EXPECT_THROW(resolve_sensors(g, outside), SensorPlacementError);
    SensorSpec dup;
    dup.positions = {{0.007, 0.007, 0.03}, {0.0071, 0.0071, 0.0301}};
    EXPECT_THROW(resolve_sensors(g, dup), SensorPlacementError);
    EXPECT_THROW(extract_sensor_series(DenseMatrix(3, 3), SensorSpec{}), SensorPlacementError);
}

// ------------------------------------------------------------ lagging

TEST(Lagging, OneSamplePerFrame) {
    const DenseMatrix series = random_matrix(120, 1, 8);
    const auto samples = build_lagged_sequences(series, DenseMatrix(), 30);
    ASSERT_EQ(samples.size(), 120u);
    for (const auto& s : samples) {
        EXPECT_EQ(s.input.rows(), 30u);
        EXPECT_EQ(s.input.cols(), 1u);
    }
}

TEST(Lagging, ConstantSeriesGivesConstantWindows) {
    const DenseMatrix series(40, 2, 0.25);
    for (const auto& s : build_lagged_sequences(series, DenseMatrix(), 30))
        for (double v : s.input.data()) EXPECT_EQ(v, 0.25);
}

TEST(Lagging, FirstWindowRepeatsFrameZero) {
    const DenseMatrix series = random_matrix(50, 3, 9);
    const auto samples = build_lagged_sequences(series, DenseMatrix(), 30);
    for (std::size_t w = 0; w < 30; ++w)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(samples[0].input(w, c), series(0, c));
}

TEST(Lagging, WindowEndsAtItsTargetFrame) {
    const DenseMatrix series = random_matrix(50, 2, 10);
    const DenseMatrix targets = random_matrix(50, 4, 11);
    const auto samples = build_lagged_sequences(series, targets, 30, 3);
    for (std::size_t k = 0; k < 50; ++k) {
        const auto& s = samples[k];
        EXPECT_EQ(s.frame, k);
        EXPECT_EQ(s.trajectory, 3u);
        for (std::size_t w = 0; w < 30; ++w) {
            const std::size_t src = k + w >= 29 ? k + w - 29 : 0;
            for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(s.input(w, c), series(src, c));
        }
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(s.target[j], targets(k, j));
    }
    EXPECT_THROW(build_lagged_sequences(series, DenseMatrix(49, 4), 30), DimensionError);
}

// ------------------------------------------------------------ splits

TEST(Splits, ToroidalPresetTestSet) {
    const SplitSpec s = toroidal_preset();
    ASSERT_EQ(s.test.size(), 3u);
    EXPECT_EQ(s.test[0].drive.Bx, 0.75);
    EXPECT_EQ(s.test[1].drive.Bx, 1.85);
    EXPECT_EQ(s.test[2].drive.Bx, 2.5);
    EXPECT_EQ(s.train.size(), 7u);
    EXPECT_EQ(s.val.size(), 2u);
    for (const auto& c : s.train) {
        EXPECT_GE(c.drive.Bx, 0.5);
        EXPECT_LE(c.drive.Bx, 2.0);
    }
}

TEST(Splits, CombinedPresetTestMagnitudeAndAngle) {
    const SplitSpec s = combined_preset();
    ASSERT_EQ(s.test.size(), 1u);
    const auto& d = s.test[0].drive;
    EXPECT_NEAR(std::hypot(d.Bx, d.By), 1.66, 0.005);
    EXPECT_NEAR(std::atan2(d.By, d.Bx) * 180.0 / kPi, 15.71, 0.01);
    EXPECT_EQ(s.train.size(), 4u);
    EXPECT_EQ(s.val.size(), 1u);
}

TEST(Splits, OscillatingPresetCaseA) {
    const SplitSpec s = oscillating_preset();
    ASSERT_EQ(s.test.size(), 3u);
    const auto& a = s.test[0].drive;
    EXPECT_EQ(a.A, 0.5);
    EXPECT_DOUBLE_EQ(a.omega, 2.0 * kPi / 0.8);
    EXPECT_DOUBLE_EQ(a.phi, kPi / 2.0);
    EXPECT_EQ(a.C, 1.2);
    EXPECT_EQ(s.train.size(), 9u);
    EXPECT_EQ(s.val.size(), 4u);
}

TEST(Splits, PresetsAreValidAndDisjoint) {
    for (const auto& name : preset_names()) EXPECT_NO_THROW(preset(name).validate()) << name;
    EXPECT_THROW(preset("poloidal"), ConfigurationError);
}

TEST(Splits, OverlapRaisesConfigurationError) {
    SplitSpec s = toroidal_preset();
    s.test.push_back({"again", MagneticDrive::toroidal(1.1)});
    EXPECT_THROW(s.validate(), ConfigurationError);
    SplitSpec dup = toroidal_preset();
    dup.val.push_back(dup.val.front());
    EXPECT_THROW(dup.validate(), ConfigurationError);
}

// ------------------------------------------------------------ bundle

TEST(Bundle, FitDataLiesInUnitInterval) {
    const Campaign c = synthetic_campaign(small_toroidal());
    const Bundle b = build_bundle("toroidal", c.runs, DatasetConfig{});
    EXPECT_EQ(b.latent_width(), 25u);
    EXPECT_EQ(b.target_width(), 25u);
    EXPECT_EQ(b.bases.size(), 5u);
    for (const auto* t : b.split(Split::Train)) {
        for (double v : t->sensors.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        for (double v : t->targets.data()) {
            EXPECT_GE(v, -1e-15);
            EXPECT_LE(v, 1.0 + 1e-15);
        }
    }
    // The 2.5 T test run extrapolates beyond the fitted range and is not clipped.
    double tmax = 0.0;
    for (double v : b.trajectory("Bx2.5").sensors.data()) tmax = std::max(tmax, v);
    for (double v : b.trajectory("Bx2.5").targets.data()) tmax = std::max(tmax, v);
    EXPECT_GT(tmax, 1.0);
}

TEST(Bundle, TestDataDoesNotInfluenceScalingOrBasis) {
    Campaign c = synthetic_campaign(small_toroidal());
    const Bundle a = build_bundle("toroidal", c.runs, DatasetConfig{});
    for (auto& r : c.runs)
        if (r.split == Split::Test) {
            auto* s = const_cast<SnapshotSeries*>(r.series);
            for (double& v : s->T.data()) v += 50.0;
            for (double& v : s->uz.data()) v *= 3.0;
        }
    const Bundle b = build_bundle("toroidal", c.runs, DatasetConfig{});
    EXPECT_EQ(a.scaling, b.scaling);
    for (std::size_t i = 0; i < a.bases.size(); ++i) EXPECT_EQ(a.bases[i].U, b.bases[i].U);
    EXPECT_EQ(a.trajectory("Bx1.1"), b.trajectory("Bx1.1"));
    EXPECT_NE(a.trajectory("Bx0.75").sensors, b.trajectory("Bx0.75").sensors);
}

TEST(Bundle, OracleTargetsReconstructLowRankData) {
    const Campaign c = synthetic_campaign(small_toroidal());
    const Bundle b = build_bundle("toroidal", c.runs, DatasetConfig{});
    for (std::size_t i : {0u, 4u}) {
        const auto& run = c.runs[i];
        const auto fields = reconstruct_fields(b, b.trajectory(run.spec.label).targets);
        for (const auto& name : b.fields) {
            const DenseMatrix truth = model_field(*run.series, name);
            const DenseMatrix err = fields.at(name) - truth;
            EXPECT_LE(linalg::max_abs(err), 1e-8 * std::max(1.0, linalg::max_abs(truth))) << name;
        }
    }
}

TEST(Bundle, SensorsMatchNormalizedTemperature) {
    const Campaign c = synthetic_campaign(small_toroidal());
    const Bundle b = build_bundle("toroidal", c.runs, DatasetConfig{});
    const auto& run = c.runs[1];
    const auto& t = b.trajectory(run.spec.label);
    const MinMax& s = b.scaling.field("T");
    for (std::size_t k = 0; k < t.sensors.rows(); ++k)
        for (std::size_t j = 0; j < b.sensors.size(); ++j)
            EXPECT_EQ(t.sensors(k, j), s.forward(run.series->T(b.sensors.rows[j], k)));
}

TEST(Bundle, StackedBasisAndParamHead) {
    const Campaign c = synthetic_campaign(small_toroidal());
    DatasetConfig cfg;
    cfg.stacked_basis = true;
    cfg.param_head = true;
    // The synthetic fields share seven temporal factors, so rank 7 is exact.
    cfg.rank = 7;
    const Bundle b = build_bundle("toroidal", c.runs, cfg);
    EXPECT_EQ(b.bases.size(), 1u);
    EXPECT_EQ(b.latent_width(), 7u);
    EXPECT_EQ(b.target_width(), 8u);
    EXPECT_EQ(b.bases[0].U.rows(), 5 * b.dof());
    const auto& t = b.trajectory("Bx1.1");
    const auto bhat = unscale_param(b, t.targets);
    for (double v : bhat) EXPECT_NEAR(v, 1.1, 1e-12);
    const auto fields = reconstruct_fields(b, t.targets);
    EXPECT_EQ(fields.size(), 5u);
    for (const auto& name : b.fields)
        EXPECT_LE(linalg::max_abs(fields.at(name) - model_field(c.series[1], name)),
                  1e-8 * std::max(1.0, linalg::max_abs(model_field(c.series[1], name))))
            << name;
}

TEST(Bundle, MismatchedGridsAreRejected) {
    Campaign c = synthetic_campaign(small_toroidal());
    auto* s = const_cast<SnapshotSeries*>(c.runs[2].series);
    s->cell_ids.pop_back();
    EXPECT_THROW(build_bundle("toroidal", c.runs, DatasetConfig{}), DimensionError);
}

TEST(Bundle, SaveLoadRoundTripsBitwise) {
    const Campaign c = synthetic_campaign(small_toroidal());
    DatasetConfig cfg;
    cfg.param_head = true;
    const Bundle b = build_bundle("toroidal", c.runs, cfg);
    const auto dir = temp_dir("roundtrip");
    save_bundle(b, dir);
    const Bundle back = load_bundle(dir);
    EXPECT_EQ(back.campaign, b.campaign);
    EXPECT_EQ(back.scaling, b.scaling);
    EXPECT_EQ(back.blocks.size(), b.blocks.size());
    for (std::size_t i = 0; i < b.bases.size(); ++i) {
        EXPECT_EQ(back.bases[i].U, b.bases[i].U);
        EXPECT_EQ(back.bases[i].sigma, b.bases[i].sigma);
    }
    EXPECT_EQ(back.trajectories, b.trajectories);
    EXPECT_EQ(back.sensors.cells, b.sensors.cells);
    EXPECT_EQ(back.cell_ids, b.cell_ids);
    EXPECT_EQ(back.rho0, b.rho0);
    EXPECT_EQ(back.config.param_head, true);
    // Rebuilding and saving again gives identical bytes.
    const auto dir2 = temp_dir("roundtrip2");
    save_bundle(build_bundle("toroidal", c.runs, cfg), dir2);
    EXPECT_EQ(hash_file(dir / "split_manifest.txt"), hash_file(dir2 / "split_manifest.txt"));
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST(Bundle, AuditPassesOnCleanBundle) {
    const Campaign c = synthetic_campaign(small_toroidal());
    const auto dir = temp_dir("audit_clean");
    save_bundle(build_bundle("toroidal", c.runs, DatasetConfig{}), dir);
    const auto report = audit_bundle(dir, [&](const std::string& h) {
        for (const auto& s : c.series)
            if (s.config.hash() == h) return s;
        throw DataError("missing run");
    });
    for (const auto& chk : report.checks) EXPECT_TRUE(chk.passed) << chk.name << ": " << chk.detail;
    EXPECT_TRUE(report.passed());
    std::filesystem::remove_all(dir);
}

TEST(Bundle, AuditDetectsTestLeakage) {
    // Build with a test case disguised as validation, then relabel it as test.
    SplitSpec leaky = small_toroidal();
    leaky.val.push_back(leaky.test.back());
    leaky.test.pop_back();
    const Campaign c = synthetic_campaign(leaky);
    const auto dir = temp_dir("audit_leak");
    save_bundle(build_bundle("toroidal", c.runs, DatasetConfig{}), dir);
    KeyValueDoc m = KeyValueDoc::load(dir / "split_manifest.txt");
    for (const auto& [k, v] : KeyValueDoc(m).entries())
        if (v == "Bx2.5") m.set(k.substr(0, k.size() - 3) + ".split", std::string("test"));
    m.save(dir / "split_manifest.txt");
    const auto report = audit_bundle(dir, [&](const std::string& h) {
        for (const auto& s : c.series)
            if (s.config.hash() == h) return s;
        throw DataError("missing run");
    });
    EXPECT_FALSE(report.passed());
    bool scaling_flagged = false;
    for (const auto& chk : report.checks)
        if (chk.name == "field scaling from fit runs") scaling_flagged = !chk.passed;
    EXPECT_TRUE(scaling_flagged);
    std::filesystem::remove_all(dir);
}
