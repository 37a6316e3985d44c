#pragma once

// .dmx matrix files: 8-byte magic, u32 version, u32 reserved (16-byte header),
// then u64 rows, u64 cols and a little-endian f64 row-major payload.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "mhdshred/linalg/dense_matrix.hpp"

namespace mhdshred::linalg {

inline constexpr std::array<char, 8> kDmxMagic = {'M', 'H', 'D', 'S', 'D', 'M', 'X', '\0'};
inline constexpr std::uint32_t kDmxVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) throw FormatError("truncated file while reading " + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace detail

inline void write_dmx(std::ostream& out, const DenseMatrix& m) {
    out.write(kDmxMagic.data(), kDmxMagic.size());
    detail::write_le<std::uint32_t>(out, kDmxVersion);
    detail::write_le<std::uint32_t>(out, 0);
    detail::write_le<std::uint64_t>(out, m.rows());
    detail::write_le<std::uint64_t>(out, m.cols());
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(m.data().data()),
                  static_cast<std::streamsize>(m.size() * sizeof(double)));
    } else {
        for (double v : m.data()) detail::write_le(out, v);
    }
}

inline DenseMatrix read_dmx(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size())) throw FormatError("dmx: truncated header");
    if (magic != kDmxMagic) throw FormatError("dmx: bad magic");
    const auto version = detail::read_le<std::uint32_t>(in, "dmx version");
    if (version != kDmxVersion) throw FormatError("dmx: unsupported version " + std::to_string(version));
    detail::read_le<std::uint32_t>(in, "dmx header");
    const auto rows = detail::read_le<std::uint64_t>(in, "dmx rows");
    const auto cols = detail::read_le<std::uint64_t>(in, "dmx cols");
    if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) throw FormatError("dmx: implausible shape");
    DenseMatrix m(rows, cols);
    if constexpr (std::endian::native == std::endian::little) {
        const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(double));
        if (!in.read(reinterpret_cast<char*>(m.data().data()), bytes)) throw FormatError("dmx: truncated payload");
    } else {
        for (double& v : m.data()) v = detail::read_le<double>(in, "dmx payload");
    }
    return m;
}

inline void save_dmx(const std::filesystem::path& path, const DenseMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    write_dmx(out, m);
    if (!out) throw FormatError("write failed: " + path.string());
}

inline DenseMatrix load_dmx(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return read_dmx(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace mhdshred::linalg
