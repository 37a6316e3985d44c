#pragma once

// Dataset bundle: normalized sensor series and scaled latent targets per
// trajectory, plus the bases and scaling they were built with.
//
// Directory layout
//   split_manifest.txt   key-value: config, trajectories, fit sets, file hashes
//   scaling.txt          key-value: field, latent and param min/max
//   cells.csv            cell_id,x,y,z of every fluid row
//   basis/<name>.dmx     U (rows x rank); <name> is a field or "stacked"
//   basis/<name>_sigma.csv
//   latent/<id>.dmx      Nt x m scaled targets
//   sensors/<id>.csv     frame,t,s1..sn normalized sensor readings
//   sensors/spec.csv     sensor,x,y,z,cell_id,row

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mhdshred/dataset/preprocess.hpp"
#include "mhdshred/dataset/scaling.hpp"
#include "mhdshred/dataset/splits.hpp"
#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/linalg/dmx.hpp"
#include "mhdshred/linalg/svd.hpp"
#include "mhdshred/mhdsim/grid.hpp"
#include "mhdshred/mhdsim/simulation.hpp"

namespace mhdshred::dataset {

using linalg::ReducedBasis;
using mhdsim::SnapshotSeries;

struct DatasetConfig {
    std::size_t rank = 5;
    std::size_t lag = 30;
    /// One SVD of the vertically stacked normalized fields instead of one per field.
    bool stacked_basis = false;
    /// Append the normalized drive magnitude |B0(t)| to the targets.
    bool param_head = false;
    std::vector<Vec3> sensors = default_sensor_positions();

    void validate() const {
        if (rank == 0) throw ConfigurationError("rank must be positive");
        if (lag == 0) throw ConfigurationError("lag must be positive");
        if (sensors.empty()) throw ConfigurationError("at least one sensor is required");
    }
};

/// Columns of the target vector belonging to one basis.
struct TargetBlock {
    std::string basis;
    std::size_t offset = 0;
    std::size_t width = 0;
};

struct TrajectoryData {
    std::string id;
    Split split = Split::Train;
    std::string source_hash;
    std::vector<double> times;
    DenseMatrix sensors;  // Nt x n_sensors, normalized
    DenseMatrix targets;  // Nt x target_width, scaled

    friend bool operator==(const TrajectoryData&, const TrajectoryData&) = default;
};

/// Raw input to bundle construction.
struct CampaignRun {
    CaseSpec spec;
    Split split = Split::Train;
    const SnapshotSeries* series = nullptr;
};

struct Bundle {
    std::string campaign;
    DatasetConfig config;
    std::vector<std::string> fields = mhdsim::snapshot_field_names();
    std::vector<std::string> basis_names;
    std::vector<ReducedBasis> bases;
    std::vector<TargetBlock> blocks;
    ScalingParams scaling;
    SensorSpec sensors;
    std::vector<std::size_t> cell_ids;
    std::vector<Vec3> centers;
    double rho0 = 0.0;
    Vec3 gravity{};
    std::vector<TrajectoryData> trajectories;

    std::size_t latent_width() const {
        std::size_t w = 0;
        for (const auto& b : blocks) w += b.width;
        return w;
    }
    std::size_t target_width() const { return latent_width() + (config.param_head ? 1 : 0); }
    std::size_t dof() const { return cell_ids.size(); }

    std::vector<const TrajectoryData*> split(Split s) const {
        std::vector<const TrajectoryData*> out;
        for (const auto& t : trajectories)
            if (t.split == s) out.push_back(&t);
        return out;
    }
    const TrajectoryData& trajectory(const std::string& id) const {
        for (const auto& t : trajectories)
            if (t.id == id) return t;
        throw DataError("bundle has no trajectory '" + id + "'");
    }
    /// Ids of the trajectories that scaling and bases are fitted on.
    std::vector<std::string> fit_ids() const {
        std::vector<std::string> ids;
        for (const auto& t : trajectories)
            if (t.split != Split::Test) ids.push_back(t.id);
        return ids;
    }
};

/// Field matrix used for the reduced model: p is replaced by p'.
inline DenseMatrix model_field(const SnapshotSeries& s, const std::string& name) {
    if (name == "p") return remove_hydrostatic(s.p, s.config.material.rho0, s.config.gravity, s.centers);
    return s.field(name);
}

/// Drive magnitude per stored frame.
inline DenseMatrix drive_magnitude(const SnapshotSeries& s) {
    DenseMatrix m(1, s.frame_count());
    for (std::size_t k = 0; k < s.frame_count(); ++k) m(0, k) = std::sqrt(mhdsim::dot(s.drive[k], s.drive[k]));
    return m;
}

namespace detail {

inline void check_runs(const std::vector<CampaignRun>& runs) {
    if (runs.empty()) throw DataError("no campaign runs");
    SplitSpec spec;
    for (const auto& r : runs) {
        if (!r.series) throw DataError("run '" + r.spec.label + "' has no snapshot series");
        (r.split == Split::Train ? spec.train : r.split == Split::Validation ? spec.val : spec.test).push_back(r.spec);
    }
    spec.validate();
    const SnapshotSeries& ref = *runs.front().series;
    for (const auto& r : runs) {
        const SnapshotSeries& s = *r.series;
        if (s.cell_ids != ref.cell_ids)
            throw DimensionError("run '" + r.spec.label + "' was generated on a different grid or mask");
        if (s.frame_count() == 0) throw DataError("run '" + r.spec.label + "' has no frames");
    }
}

}  // namespace detail

/// Builds the bundle. Scaling, bases and latent scaling are fitted on the
/// training and validation runs only; test runs are only transformed.
inline Bundle build_bundle(const std::string& campaign, const std::vector<CampaignRun>& runs,
                           const DatasetConfig& cfg) {
    cfg.validate();
    detail::check_runs(runs);
    const SnapshotSeries& ref = *runs.front().series;

    Bundle b;
    b.campaign = campaign;
    b.config = cfg;
    b.cell_ids = ref.cell_ids;
    b.centers = ref.centers;
    b.rho0 = ref.config.material.rho0;
    b.gravity = ref.config.gravity;

    const mhdsim::Grid grid = mhdsim::build_grid(ref.config.geometry);
    if (grid.fluid_cells() != ref.cell_ids)
        throw DimensionError("snapshot rows do not match the pipe grid of their configuration");
    b.sensors.positions = cfg.sensors;
    b.sensors = resolve_sensors(grid, b.sensors);

    std::vector<std::size_t> fit;
    for (std::size_t i = 0; i < runs.size(); ++i)
        if (runs[i].split != Split::Test) fit.push_back(i);
    if (fit.empty()) throw DataError("no training or validation runs");

    for (const auto& r : runs) {
        TrajectoryData t;
        t.id = r.spec.label;
        t.split = r.split;
        t.source_hash = r.series->config.hash();
        t.times = r.series->times;
        b.trajectories.push_back(std::move(t));
    }

    // Per-run latent rows, accumulated basis by basis.
    std::vector<std::vector<DenseMatrix>> latent(runs.size());

    auto fit_basis = [&](const std::string& name, std::vector<DenseMatrix> normalized) {
        std::vector<const DenseMatrix*> fit_blocks;
        for (std::size_t i : fit) fit_blocks.push_back(&normalized[i]);
        const StackedMatrix X = stack_parametric(fit_blocks);
        const std::size_t r = std::min({cfg.rank, X.X.rows(), X.X.cols()});
        ReducedBasis basis = linalg::truncated_svd(X.X, r).basis;
        b.blocks.push_back({name, b.latent_width(), r});
        for (std::size_t i = 0; i < runs.size(); ++i) latent[i].push_back(linalg::project(basis, normalized[i]));
        b.basis_names.push_back(name);
        b.bases.push_back(std::move(basis));
    };

    std::vector<DenseMatrix> stacked(cfg.stacked_basis ? runs.size() : 0);
    for (const auto& name : b.fields) {
        std::vector<DenseMatrix> raw;
        for (const auto& r : runs) raw.push_back(model_field(*r.series, name));
        std::vector<const DenseMatrix*> fit_blocks;
        for (std::size_t i : fit) fit_blocks.push_back(&raw[i]);
        const MinMax mm = fit_minmax(name, fit_blocks);
        b.scaling.fields.push_back(mm);
        for (auto& m : raw) m = normalize_minmax(m, mm);
        if (name == b.sensors.field)
            for (std::size_t i = 0; i < runs.size(); ++i)
                b.trajectories[i].sensors = extract_sensor_series(raw[i], b.sensors);
        if (!cfg.stacked_basis) {
            fit_basis(name, std::move(raw));
        } else {
            for (std::size_t i = 0; i < runs.size(); ++i) {
                DenseMatrix& s = stacked[i];
                DenseMatrix grown(s.rows() + raw[i].rows(), raw[i].cols());
                std::copy(s.data().begin(), s.data().end(), grown.data().begin());
                std::copy(raw[i].data().begin(), raw[i].data().end(),
                          grown.data().begin() + static_cast<std::ptrdiff_t>(s.size()));
                s = std::move(grown);
            }
        }
    }
    if (cfg.stacked_basis) fit_basis("stacked", std::move(stacked));

    // Per-mode latent scaling over the fit runs.
    const std::size_t m = b.latent_width();
    std::vector<DenseMatrix> coeffs(runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i) {
        DenseMatrix c(m, runs[i].series->frame_count());
        std::size_t row = 0;
        for (const auto& l : latent[i])
            for (std::size_t k = 0; k < l.rows(); ++k, ++row) std::copy(l.row(k).begin(), l.row(k).end(), c.row(row).begin());
        coeffs[i] = std::move(c);
    }
    std::vector<const DenseMatrix*> fit_coeffs;
    for (std::size_t i : fit) fit_coeffs.push_back(&coeffs[i]);
    for (const auto& blk : b.blocks)
        for (std::size_t k = 0; k < blk.width; ++k)
            b.scaling.latent.push_back(
                fit_row_minmax(blk.basis + ".mode" + std::to_string(k), fit_coeffs, blk.offset + k));

    std::vector<DenseMatrix> params(runs.size());
    if (cfg.param_head) {
        for (std::size_t i = 0; i < runs.size(); ++i) params[i] = drive_magnitude(*runs[i].series);
        std::vector<const DenseMatrix*> fit_params;
        for (std::size_t i : fit) fit_params.push_back(&params[i]);
        b.scaling.param.push_back(fit_minmax("B", fit_params));
    }

    for (std::size_t i = 0; i < runs.size(); ++i) {
        const std::size_t nt = coeffs[i].cols();
        DenseMatrix t(nt, b.target_width());
        for (std::size_t k = 0; k < nt; ++k) {
            for (std::size_t j = 0; j < m; ++j) t(k, j) = b.scaling.latent[j].forward(coeffs[i](j, k));
            if (cfg.param_head) t(k, m) = b.scaling.param[0].forward(params[i](0, k));
        }
        b.trajectories[i].targets = std::move(t);
    }
    return b;
}

/// Unscaled latent coefficients (rows = modes, columns = frames) of one basis
/// from scaled targets (rows = frames).
inline DenseMatrix unscale_latent(const Bundle& b, const DenseMatrix& targets, std::size_t block) {
    if (targets.cols() < b.latent_width())
        throw DimensionError("targets have " + std::to_string(targets.cols()) + " columns, expected at least " +
                             std::to_string(b.latent_width()));
    const TargetBlock& blk = b.blocks.at(block);
    DenseMatrix v(blk.width, targets.rows());
    for (std::size_t k = 0; k < targets.rows(); ++k)
        for (std::size_t j = 0; j < blk.width; ++j)
            v(j, k) = b.scaling.latent[blk.offset + j].inverse(targets(k, blk.offset + j));
    return v;
}

/// Physical fields (rows = fluid cells, columns = frames) from scaled targets.
/// Pressure is returned as p' (hydrostatic part removed).
inline std::map<std::string, DenseMatrix> reconstruct_fields(const Bundle& b, const DenseMatrix& targets) {
    std::map<std::string, DenseMatrix> out;
    const std::size_t nh = b.dof();
    for (std::size_t blk = 0; blk < b.blocks.size(); ++blk) {
        const DenseMatrix x = linalg::reconstruct(b.bases[blk], unscale_latent(b, targets, blk));
        if (b.config.stacked_basis) {
            for (std::size_t f = 0; f < b.fields.size(); ++f) {
                DenseMatrix part(nh, x.cols());
                std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(f * nh * x.cols()), nh * x.cols(),
                            part.data().begin());
                out[b.fields[f]] = denormalize_minmax(part, b.scaling.fields[f]);
            }
        } else {
            out[b.blocks[blk].basis] = denormalize_minmax(x, b.scaling.field(b.blocks[blk].basis));
        }
    }
    return out;
}

/// Denormalized drive magnitude from the parameter column of scaled targets.
inline std::vector<double> unscale_param(const Bundle& b, const DenseMatrix& targets) {
    if (!b.config.param_head) throw ConfigurationError("bundle has no parameter head");
    const std::size_t col = b.latent_width();
    std::vector<double> out(targets.rows());
    for (std::size_t k = 0; k < targets.rows(); ++k) out[k] = b.scaling.param[0].inverse(targets(k, col));
    return out;
}

// ---------------------------------------------------------------- I/O

namespace detail {

inline void write_sigma(const std::filesystem::path& path, const std::vector<double>& sigma) {
    std::ofstream out(path);
    out << "mode,sigma\n";
    for (std::size_t i = 0; i < sigma.size(); ++i) out << i << ',' << format_double(sigma[i]) << '\n';
    if (!out) throw FormatError("cannot write " + path.string());
}

inline std::string bundle_file_key(const std::string& rel) {
    std::string k = "files." + rel;
    std::replace(k.begin(), k.end(), '/', '.');
    return k;
}

}  // namespace detail

inline KeyValueDoc dataset_config_doc(const DatasetConfig& c) {
    KeyValueDoc d;
    d.set("dataset.rank", c.rank);
    d.set("dataset.lag", c.lag);
    d.set("dataset.stacked_basis", c.stacked_basis);
    d.set("dataset.param_head", c.param_head);
    d.set("dataset.sensor_count", c.sensors.size());
    for (std::size_t s = 0; s < c.sensors.size(); ++s)
        for (int a = 0; a < 3; ++a)
            d.set("dataset.sensor." + std::to_string(s) + "." + "xyz"[a], c.sensors[s][a]);
    return d;
}

inline DatasetConfig dataset_config_from_doc(const KeyValueDoc& d) {
    DatasetConfig c;
    c.rank = static_cast<std::size_t>(d.get_int_or("dataset.rank", 5));
    c.lag = static_cast<std::size_t>(d.get_int_or("dataset.lag", 30));
    c.stacked_basis = d.get_bool_or("dataset.stacked_basis", false);
    c.param_head = d.get_bool_or("dataset.param_head", false);
    if (d.has("dataset.sensor_count")) {
        c.sensors.clear();
        const auto n = static_cast<std::size_t>(d.get_int("dataset.sensor_count"));
        for (std::size_t s = 0; s < n; ++s) {
            Vec3 x{};
            for (int a = 0; a < 3; ++a) x[a] = d.get_double("dataset.sensor." + std::to_string(s) + "." + "xyz"[a]);
            c.sensors.push_back(x);
        }
    }
    c.validate();
    return c;
}

inline void save_bundle(const Bundle& b, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "basis");
    fs::create_directories(dir / "latent");
    fs::create_directories(dir / "sensors");
    std::vector<std::string> files;

    b.scaling.to_keyvalue().save(dir / "scaling.txt");
    files.push_back("scaling.txt");
    {
        std::ofstream cells(dir / "cells.csv");
        cells << "cell_id,x,y,z\n";
        for (std::size_t r = 0; r < b.cell_ids.size(); ++r)
            cells << b.cell_ids[r] << ',' << format_double(b.centers[r][0]) << ',' << format_double(b.centers[r][1])
                  << ',' << format_double(b.centers[r][2]) << '\n';
    }
    files.push_back("cells.csv");
    for (std::size_t i = 0; i < b.bases.size(); ++i) {
        linalg::save_dmx(dir / "basis" / (b.basis_names[i] + ".dmx"), b.bases[i].U);
        detail::write_sigma(dir / "basis" / (b.basis_names[i] + "_sigma.csv"), b.bases[i].sigma);
        files.push_back("basis/" + b.basis_names[i] + ".dmx");
        files.push_back("basis/" + b.basis_names[i] + "_sigma.csv");
    }
    {
        std::ofstream spec(dir / "sensors" / "spec.csv");
        spec << "sensor,x,y,z,cell_id,row\n";
        for (std::size_t s = 0; s < b.sensors.size(); ++s)
            spec << s << ',' << format_double(b.sensors.positions[s][0]) << ','
                 << format_double(b.sensors.positions[s][1]) << ',' << format_double(b.sensors.positions[s][2]) << ','
                 << b.sensors.cells[s] << ',' << b.sensors.rows[s] << '\n';
    }
    files.push_back("sensors/spec.csv");
    for (const auto& t : b.trajectories) {
        linalg::save_dmx(dir / "latent" / (t.id + ".dmx"), t.targets);
        std::ofstream out(dir / "sensors" / (t.id + ".csv"));
        out << "frame,t";
        for (std::size_t s = 0; s < t.sensors.cols(); ++s) out << ",s" << s + 1;
        out << '\n';
        for (std::size_t k = 0; k < t.sensors.rows(); ++k) {
            out << k << ',' << format_double(t.times[k]);
            for (double v : t.sensors.row(k)) out << ',' << format_double(v);
            out << '\n';
        }
        if (!out) throw FormatError("cannot write sensor series for '" + t.id + "'");
        files.push_back("latent/" + t.id + ".dmx");
        files.push_back("sensors/" + t.id + ".csv");
    }

    KeyValueDoc m = dataset_config_doc(b.config);
    m.set("bundle.campaign", b.campaign);
    m.set("bundle.rho0", b.rho0);
    for (int a = 0; a < 3; ++a) m.set(std::string("bundle.gravity.") + "xyz"[a], b.gravity[a]);
    m.set("bundle.basis_count", b.bases.size());
    for (std::size_t i = 0; i < b.blocks.size(); ++i) {
        const std::string p = "bundle.block." + std::to_string(i);
        m.set(p + ".basis", b.blocks[i].basis);
        m.set(p + ".offset", b.blocks[i].offset);
        m.set(p + ".width", b.blocks[i].width);
    }
    m.set("bundle.trajectory_count", b.trajectories.size());
    for (std::size_t i = 0; i < b.trajectories.size(); ++i) {
        const auto& t = b.trajectories[i];
        const std::string p = "trajectory." + std::to_string(i);
        m.set(p + ".id", t.id);
        m.set(p + ".split", to_string(t.split));
        m.set(p + ".source_hash", t.source_hash);
    }
    std::string fit_list;
    for (const auto& id : b.fit_ids()) fit_list += (fit_list.empty() ? "" : ",") + id;
    m.set("fit.scaling", fit_list);
    m.set("fit.basis", fit_list);
    m.set("fit.latent_scaling", fit_list);
    for (const auto& f : files) m.set(detail::bundle_file_key(f), hash_file(dir / f));
    m.save(dir / "split_manifest.txt");
}

inline Bundle load_bundle(const std::filesystem::path& dir) {
    const KeyValueDoc m = KeyValueDoc::load(dir / "split_manifest.txt");
    Bundle b;
    b.config = dataset_config_from_doc(m);
    b.campaign = m.get("bundle.campaign");
    b.rho0 = m.get_double("bundle.rho0");
    for (int a = 0; a < 3; ++a) b.gravity[a] = m.get_double(std::string("bundle.gravity.") + "xyz"[a]);
    b.scaling = ScalingParams::from_keyvalue(KeyValueDoc::load(dir / "scaling.txt"));
    for (const auto& row : mhdsim::read_csv_rows(dir / "cells.csv")) {
        if (row.size() != 4) throw FormatError("cells.csv: expected 4 columns");
        b.cell_ids.push_back(static_cast<std::size_t>(std::stoull(row[0])));
        b.centers.push_back({mhdsim::parse_double(row[1]), mhdsim::parse_double(row[2]), mhdsim::parse_double(row[3])});
    }
    const auto nb = static_cast<std::size_t>(m.get_int("bundle.basis_count"));
    for (std::size_t i = 0; i < nb; ++i) {
        const std::string p = "bundle.block." + std::to_string(i);
        TargetBlock blk{m.get(p + ".basis"), static_cast<std::size_t>(m.get_int(p + ".offset")),
                        static_cast<std::size_t>(m.get_int(p + ".width"))};
        ReducedBasis basis;
        basis.U = linalg::load_dmx(dir / "basis" / (blk.basis + ".dmx"));
        for (const auto& row : mhdsim::read_csv_rows(dir / "basis" / (blk.basis + "_sigma.csv")))
            basis.sigma.push_back(mhdsim::parse_double(row.at(1)));
        basis.rank = basis.U.cols();
        if (basis.rank != blk.width || basis.sigma.size() != blk.width)
            throw FormatError("basis '" + blk.basis + "' does not match its manifest width");
        b.basis_names.push_back(blk.basis);
        b.bases.push_back(std::move(basis));
        b.blocks.push_back(blk);
    }
    b.sensors.positions.clear();
    for (const auto& row : mhdsim::read_csv_rows(dir / "sensors" / "spec.csv")) {
        if (row.size() != 6) throw FormatError("sensors/spec.csv: expected 6 columns");
        b.sensors.positions.push_back(
            {mhdsim::parse_double(row[1]), mhdsim::parse_double(row[2]), mhdsim::parse_double(row[3])});
        b.sensors.cells.push_back(static_cast<std::size_t>(std::stoull(row[4])));
        b.sensors.rows.push_back(static_cast<std::size_t>(std::stoull(row[5])));
    }
    const auto nt = static_cast<std::size_t>(m.get_int("bundle.trajectory_count"));
    for (std::size_t i = 0; i < nt; ++i) {
        const std::string p = "trajectory." + std::to_string(i);
        TrajectoryData t;
        t.id = m.get(p + ".id");
        t.split = split_from_string(m.get(p + ".split"));
        t.source_hash = m.get(p + ".source_hash");
        t.targets = linalg::load_dmx(dir / "latent" / (t.id + ".dmx"));
        const auto rows = mhdsim::read_csv_rows(dir / "sensors" / (t.id + ".csv"));
        t.sensors = DenseMatrix(rows.size(), b.sensors.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (rows[k].size() != 2 + b.sensors.size()) throw FormatError("sensor series '" + t.id + "' is ragged");
            t.times.push_back(mhdsim::parse_double(rows[k][1]));
            for (std::size_t s = 0; s < b.sensors.size(); ++s) t.sensors(k, s) = mhdsim::parse_double(rows[k][2 + s]);
        }
        if (t.targets.rows() != t.sensors.rows() || t.targets.cols() != b.target_width())
            throw FormatError("latent targets of '" + t.id + "' do not match the manifest");
        b.trajectories.push_back(std::move(t));
    }
    return b;
}

// ---------------------------------------------------------------- audit

struct AuditCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct AuditReport {
    std::vector<AuditCheck> checks;
    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.passed; });
    }
};

/// Verifies from the stored bundle and the raw runs that scaling, bases and
/// latent scaling depend on training and validation data only. `load_run`
/// returns the raw series of a trajectory given its source hash.
inline AuditReport audit_bundle(const std::filesystem::path& dir,
                                const std::function<SnapshotSeries(const std::string& source_hash)>& load_run) {
    AuditReport rep;
    auto add = [&](std::string name, bool ok, std::string detail) {
        rep.checks.push_back({std::move(name), ok, std::move(detail)});
    };
    const KeyValueDoc m = KeyValueDoc::load(dir / "split_manifest.txt");

    // File integrity.
    {
        std::size_t bad = 0, count = 0;
        for (const auto& [key, value] : m.entries()) {
            if (key.rfind("files.", 0) != 0) continue;
            ++count;
            std::string rel = key.substr(6);
            const auto dot = rel.find('.');
            if (dot != std::string::npos && (rel.substr(0, dot) == "basis" || rel.substr(0, dot) == "latent" ||
                                             rel.substr(0, dot) == "sensors"))
                rel[dot] = '/';
            if (!std::filesystem::exists(dir / rel) || hash_file(dir / rel) != value) ++bad;
        }
        add("file hashes", bad == 0 && count > 0, std::to_string(count - bad) + "/" + std::to_string(count) + " match");
    }

    const Bundle b = load_bundle(dir);
    std::set<std::string> fit_ids, test_ids, fit_hashes, test_hashes;
    for (const auto& t : b.trajectories) {
        (t.split == Split::Test ? test_ids : fit_ids).insert(t.id);
        (t.split == Split::Test ? test_hashes : fit_hashes).insert(t.source_hash);
    }
    {
        std::vector<std::string> overlap;
        for (const auto& h : test_hashes)
            if (fit_hashes.count(h)) overlap.push_back(h);
        add("split disjointness", overlap.empty() && !test_ids.empty(),
            std::to_string(fit_ids.size()) + " fit, " + std::to_string(test_ids.size()) + " test, " +
                std::to_string(overlap.size()) + " shared sources");
    }
    for (const std::string key : {"fit.scaling", "fit.basis", "fit.latent_scaling"}) {
        std::set<std::string> listed;
        std::stringstream ss(m.get(key));
        std::string id;
        while (std::getline(ss, id, ','))
            if (!id.empty()) listed.insert(id);
        bool no_test = true;
        for (const auto& x : listed) no_test = no_test && !test_ids.count(x);
        add(key + " excludes test", listed == fit_ids && no_test,
            std::to_string(listed.size()) + " trajectories listed");
    }

    // Recompute field scaling from the raw fit runs.
    std::vector<SnapshotSeries> raw;
    for (const auto& t : b.trajectories)
        if (t.split != Split::Test) {
            raw.push_back(load_run(t.source_hash));
            if (raw.back().config.hash() != t.source_hash)
                throw DataError("run for '" + t.id + "' does not match its recorded source hash");
        }
    std::vector<std::vector<DenseMatrix>> normalized(raw.size());
    {
        bool ok = true;
        std::string detail;
        for (std::size_t f = 0; f < b.fields.size(); ++f) {
            std::vector<DenseMatrix> fm;
            for (const auto& s : raw) fm.push_back(model_field(s, b.fields[f]));
            std::vector<const DenseMatrix*> ptr;
            for (const auto& x : fm) ptr.push_back(&x);
            const MinMax mm = fit_minmax(b.fields[f], ptr);
            if (!(mm == b.scaling.fields.at(f))) {
                ok = false;
                detail += b.fields[f] + " differs; ";
            }
            for (std::size_t i = 0; i < raw.size(); ++i)
                normalized[i].push_back(normalize_minmax(fm[i], b.scaling.fields.at(f)));
        }
        add("field scaling from fit runs", ok, ok ? "bitwise equal" : detail);
    }

    // Each basis must be the dominant left singular subspace of the fit data:
    // X X^T U = U diag(sigma^2).
    std::vector<std::vector<DenseMatrix>> coeffs(raw.size());
    for (std::size_t blk = 0; blk < b.bases.size(); ++blk) {
        std::vector<DenseMatrix> data;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (!b.config.stacked_basis) {
                data.push_back(normalized[i][blk]);
            } else {
                const std::size_t nh = b.dof(), nt = normalized[i][0].cols();
                DenseMatrix s(nh * b.fields.size(), nt);
                for (std::size_t f = 0; f < b.fields.size(); ++f)
                    std::copy(normalized[i][f].data().begin(), normalized[i][f].data().end(),
                              s.data().begin() + static_cast<std::ptrdiff_t>(f * nh * nt));
                data.push_back(std::move(s));
            }
        }
        std::vector<const DenseMatrix*> ptr;
        for (const auto& x : data) ptr.push_back(&x);
        const DenseMatrix X = stack_parametric(ptr).X;
        const ReducedBasis& basis = b.bases[blk];
        const DenseMatrix W = linalg::matmul_tn(X, basis.U);
        DenseMatrix R = linalg::matmul(X, W);
        for (std::size_t r = 0; r < R.rows(); ++r)
            for (std::size_t c = 0; c < basis.rank; ++c) R(r, c) -= basis.U(r, c) * basis.sigma[c] * basis.sigma[c];
        const double rel = linalg::frobenius_norm(R) / (basis.sigma[0] * basis.sigma[0]);
        add("basis " + b.basis_names[blk] + " from fit runs", rel <= 1e-8,
            "eigen-relation residual " + format_double(rel));
        for (std::size_t i = 0; i < raw.size(); ++i) coeffs[i].push_back(linalg::project(basis, data[i]));
    }

    // Latent scaling recomputed from the projections of the fit runs.
    {
        double worst = 0.0;
        for (const auto& blk : b.blocks)
            for (std::size_t k = 0; k < blk.width; ++k) {
                const std::size_t bi = static_cast<std::size_t>(&blk - b.blocks.data());
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (std::size_t i = 0; i < raw.size(); ++i)
                    for (double v : coeffs[i][bi].row(k)) {
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                const MinMax& s = b.scaling.latent.at(blk.offset + k);
                const double span = s.max - s.min;
                worst = std::max({worst, std::abs(lo - s.min) / span, std::abs(hi - s.max) / span});
            }
        add("latent scaling from fit runs", worst <= 1e-9, "max relative deviation " + format_double(worst));
    }
    if (b.config.param_head) {
        std::vector<DenseMatrix> pm;
        for (const auto& s : raw) pm.push_back(drive_magnitude(s));
        std::vector<const DenseMatrix*> ptr;
        for (const auto& x : pm) ptr.push_back(&x);
        const MinMax mm = fit_minmax("B", ptr);
        add("parameter scaling from fit runs", mm == b.scaling.param.at(0), "drive magnitude range");
    }
    return rep;
}

}  // namespace mhdshred::dataset
