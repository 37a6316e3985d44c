#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/linalg/dmx.hpp"
#include "mhdshred/mhdsim/electromagnetics.hpp"
#include "mhdshred/mhdsim/energy.hpp"
#include "mhdshred/mhdsim/grid.hpp"
#include "mhdshred/mhdsim/momentum.hpp"
#include "mhdshred/mhdsim/state.hpp"

namespace mhdshred::mhdsim {

using linalg::DenseMatrix;

inline constexpr double kGuardTmin = 300.0;
inline constexpr double kGuardTmax = 1200.0;

/// Stored output of one run. Matrices have one row per fluid cell and one
/// column per stored frame; frame f is at time (f + 1) * store_dt.
struct SnapshotSeries {
    SimConfig config;
    std::vector<std::size_t> cell_ids;  // linear grid index of each fluid row
    std::vector<Vec3> centers;
    DenseMatrix T, ux, uy, uz, p;
    std::vector<double> times;
    std::vector<Vec3> drive;
    double wall_time = 0.0;

    std::size_t frame_count() const noexcept { return times.size(); }
    std::size_t dof() const noexcept { return cell_ids.size(); }

    const DenseMatrix& field(const std::string& name) const {
        if (name == "T") return T;
        if (name == "ux") return ux;
        if (name == "uy") return uy;
        if (name == "uz") return uz;
        if (name == "p") return p;
        throw UsageError("unknown field '" + name + "'");
    }
};

inline const std::vector<std::string>& snapshot_field_names() {
    static const std::vector<std::string> names = {"T", "ux", "uy", "uz", "p"};
    return names;
}

/// Per-substep observer: state after the step and the step's projection report.
using StepObserver = std::function<void(const FluidState&, const ProjectionReport&)>;

struct RunOptions {
    StepObserver on_step;
    std::function<void(int frame, int frames)> on_frame;
    /// Electric wall condition for the quasi-static closure.
    ElectricWalls walls = ElectricWalls::Insulating;
    /// Custom solid mask; the pipe mask is used when empty.
    std::function<bool(const Vec3&)> solid_mask;
};

inline Grid make_grid(const SimConfig& cfg, const RunOptions& opts = {}) {
    return opts.solid_mask ? build_masked_grid(cfg.geometry, opts.solid_mask) : build_grid(cfg.geometry);
}

/// Largest admissible substep for the current state.
inline double stable_dt(const Grid& g, const SimConfig& cfg, const MomentumSolver& mom, const FluidState& s,
                        const CellArrays& uc) {
    double dt = std::min(mom.dt_limit(s.u), energy_dt_limit(g, uc, cfg.material));
    const Vec3 b = cfg.drive.value(s.time);
    const double b2 = std::max(dot(b, b), cfg.drive.max_magnitude() * cfg.drive.max_magnitude());
    if (b2 > 0.0) dt = std::min(dt, cfg.material.rho0 / (cfg.material.sigma_el * b2));
    if (cfg.induction_mode == InductionMode::Full)
        dt = std::min(dt, induction_dt_limit(g, cfg.material.magnetic_diffusivity()));
    return 0.9 * dt;
}

/// Integrates the coupled system and stores (T, u, p) every store_dt.
inline SnapshotSeries run_simulation(const SimConfig& cfg, const RunOptions& opts = {}) {
    cfg.validate();
    const auto wall_start = std::chrono::steady_clock::now();
    const Grid g = make_grid(cfg, opts);
    const int frames = cfg.frame_count();

    SnapshotSeries out;
    out.config = cfg;
    out.cell_ids = g.fluid_cells();
    for (std::size_t c : out.cell_ids) out.centers.push_back(g.center(c));
    const std::size_t nh = g.fluid_count();
    out.T = out.ux = out.uy = out.uz = out.p = DenseMatrix(nh, static_cast<std::size_t>(frames));

    FluidState s = initial_state(g, cfg);
    const MomentumSolver mom(g, cfg.material, {cfg.gravity, cfg.axial_forcing, cfg.p_ext, cfg.cfl});
    std::optional<QuasiStaticCurrent> qs;
    if (cfg.induction_mode == InductionMode::QuasiStatic) qs.emplace(g, opts.walls);
    const std::vector<double> no_heat;

    for (int f = 0; f < frames; ++f) {
        const double t_frame = (f + 1) * cfg.store_dt;
        try {
            while (s.time < t_frame) {
                CellArrays uc = cell_velocity(g, s.u);
                const double remaining = t_frame - s.time;
                const double limit = stable_dt(g, cfg, mom, s, uc);
                const double dt = remaining / std::ceil(remaining / limit - 1e-9);

                const CellForces forces = qs ? qs->compute(uc, cfg.drive.value(s.time), cfg.material)
                                             : resolved_field_forces(g, s.B, cfg.material);
                const ProjectionReport report = mom.step(s, dt, forces);
                uc = cell_velocity(g, s.u);
                s.T = step_energy(g, s.T, uc, dt, cfg.material, cfg.joule_heating ? forces.heat : no_heat);
                s.B = step_induction(g, s, dt, cfg.material, cfg.induction_mode, cfg.drive);
                update_density(s.T, cfg.material, cfg.T0, s.rho);
                s.time = remaining - dt <= 1e-12 * t_frame ? t_frame : s.time + dt;

                for (std::size_t c : g.fluid_cells())
                    if (!(s.T[c] >= kGuardTmin && s.T[c] <= kGuardTmax))
                        throw PhysicsError("temperature " + std::to_string(s.T[c]) + " K left the guard band at cell " +
                                           std::to_string(c));
                if (opts.on_step) opts.on_step(s, report);
            }
        } catch (const SimulationError&) {
            throw;
        } catch (const Error& e) {
            throw SimulationError(e.what(), f);
        }

        const CellArrays uc = cell_velocity(g, s.u);
        for (std::size_t r = 0; r < nh; ++r) {
            const std::size_t c = out.cell_ids[r];
            const auto col = static_cast<std::size_t>(f);
            out.T(r, col) = s.T[c];
            out.ux(r, col) = uc[0][c];
            out.uy(r, col) = uc[1][c];
            out.uz(r, col) = uc[2][c];
            out.p(r, col) = s.p[c];
        }
        out.times.push_back(t_frame);
        out.drive.push_back(cfg.drive.value(t_frame));
        if (opts.on_frame) opts.on_frame(f + 1, frames);
    }
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return out;
}

/// Writes T.dmx, ux.dmx, uy.dmx, uz.dmx, p.dmx, cells.csv, drive.csv,
/// manifest.txt (deterministic) and timing.txt (wall clock).
inline void save_series(const SnapshotSeries& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& name : snapshot_field_names()) linalg::save_dmx(dir / (name + ".dmx"), s.field(name));
    {
        std::ofstream cells(dir / "cells.csv");
        cells << "cell_id,x,y,z\n";
        for (std::size_t r = 0; r < s.cell_ids.size(); ++r)
            cells << s.cell_ids[r] << ',' << format_double(s.centers[r][0]) << ',' << format_double(s.centers[r][1])
                  << ',' << format_double(s.centers[r][2]) << '\n';
    }
    {
        std::ofstream drive(dir / "drive.csv");
        drive << "frame,t,Bx,By,Bz\n";
        for (std::size_t f = 0; f < s.times.size(); ++f)
            drive << f << ',' << format_double(s.times[f]) << ',' << format_double(s.drive[f][0]) << ','
                  << format_double(s.drive[f][1]) << ',' << format_double(s.drive[f][2]) << '\n';
    }
    KeyValueDoc m = s.config.to_keyvalue();
    m.set("run.config_hash", s.config.hash());
    m.set("run.frame_count", s.frame_count());
    m.set("run.fluid_cells", s.dof());
    m.set("run.pressure_anchor", std::string("dirichlet p_ext on walls, periodic axially"));
    for (const auto& name : snapshot_field_names()) m.set("files." + name, hash_file(dir / (name + ".dmx")));
    m.save(dir / "manifest.txt");
    std::ofstream timing(dir / "timing.txt");
    timing << "wall_time_s = " << format_double(s.wall_time) << "\n";
}

inline std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        rows.push_back(std::move(cols));
    }
    return rows;
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("'" + s + "' is not a number");
    return v;
}

inline SnapshotSeries load_series(const std::filesystem::path& dir) {
    SnapshotSeries s;
    const KeyValueDoc m = KeyValueDoc::load(dir / "manifest.txt");
    s.config = SimConfig::from_keyvalue(m);
    s.T = linalg::load_dmx(dir / "T.dmx");
    s.ux = linalg::load_dmx(dir / "ux.dmx");
    s.uy = linalg::load_dmx(dir / "uy.dmx");
    s.uz = linalg::load_dmx(dir / "uz.dmx");
    s.p = linalg::load_dmx(dir / "p.dmx");
    for (const auto& row : read_csv_rows(dir / "cells.csv")) {
        if (row.size() != 4) throw FormatError("cells.csv: expected 4 columns");
        s.cell_ids.push_back(static_cast<std::size_t>(std::stoull(row[0])));
        s.centers.push_back({parse_double(row[1]), parse_double(row[2]), parse_double(row[3])});
    }
    for (const auto& row : read_csv_rows(dir / "drive.csv")) {
        if (row.size() != 5) throw FormatError("drive.csv: expected 5 columns");
        s.times.push_back(parse_double(row[1]));
        s.drive.push_back({parse_double(row[2]), parse_double(row[3]), parse_double(row[4])});
    }
    for (const auto& name : snapshot_field_names()) {
        const DenseMatrix& f = s.field(name);
        if (f.rows() != s.cell_ids.size() || f.cols() != s.times.size())
            throw FormatError("snapshot " + name + ".dmx does not match cells.csv/drive.csv");
    }
    return s;
}

}  // namespace mhdshred::mhdsim
