#pragma once

// Legacy ASCII VTK structured-points export. Cell data covers every grid
// cell; solid cells are written as 0 and flagged in the "fluid" mask.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/mhdsim/grid.hpp"

namespace mhdshred::mhdsim {

struct VtkScalar {
    std::string name;
    std::vector<double> fluid_values;  // one per fluid cell, in fluid order
};

inline void write_vtk(const std::filesystem::path& path, const Grid& g, const std::vector<VtkScalar>& scalars,
                      const std::string& title = "mhdshred") {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    const auto& geo = g.geometry();
    out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET STRUCTURED_POINTS\n";
    out << "DIMENSIONS " << g.nx() + 1 << ' ' << g.ny() + 1 << ' ' << g.nz() + 1 << '\n';
    out << "ORIGIN " << format_double(-0.5 * geo.side) << ' ' << format_double(-0.5 * geo.side) << " 0\n";
    out << "SPACING " << format_double(g.dx()) << ' ' << format_double(g.dy()) << ' ' << format_double(g.dz()) << '\n';
    out << "CELL_DATA " << g.cell_count() << '\n';
    out << "SCALARS fluid int 1\nLOOKUP_TABLE default\n";
    for (std::size_t c = 0; c < g.cell_count(); ++c) out << (g.solid(c) ? 0 : 1) << '\n';
    for (const auto& s : scalars) {
        if (s.fluid_values.size() != g.fluid_count())
            throw DimensionError("write_vtk: field '" + s.name + "' has " + std::to_string(s.fluid_values.size()) +
                                 " values, expected " + std::to_string(g.fluid_count()));
        out << "SCALARS " << s.name << " double 1\nLOOKUP_TABLE default\n";
        for (std::size_t c = 0; c < g.cell_count(); ++c) {
            const int f = g.fluid_id(c);
            out << (f < 0 ? std::string("0") : format_double(s.fluid_values[static_cast<std::size_t>(f)])) << '\n';
        }
    }
    if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace mhdshred::mhdsim
