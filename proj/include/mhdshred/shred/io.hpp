#pragma once

// Model file, little-endian:
//   magic "MHDSHRED" | u32 version
//   u64 length + key-value text: architecture, output map, scaling
//   u64 tensor count, then per tensor: u64 name length, name, u64 rows, u64 cols, rows*cols f64 (column-major)
//   u64 FNV-1a checksum of everything before it

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/shred/model.hpp"

namespace mhdshred::shred {

inline constexpr char kModelMagic[8] = {'M', 'H', 'D', 'S', 'H', 'R', 'E', 'D'};
inline constexpr std::uint32_t kModelVersion = 1;

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

inline KeyValueDoc model_header(const ShredModel& m) {
    KeyValueDoc d = m.arch.to_keyvalue();
    d.set("model.parameter_count", m.parameter_count());
    d.set("output.block_count", m.blocks.size());
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const std::string p = "output.block." + std::to_string(i);
        d.set(p + ".basis", m.blocks[i].basis);
        d.set(p + ".offset", m.blocks[i].offset);
        d.set(p + ".width", m.blocks[i].width);
    }
    d.merge(m.scaling.to_keyvalue(), "scaling");
    return d;
}

inline std::string serialize_model(const ShredModel& m) {
    std::string out(kModelMagic, 8);
    auto put = [&out](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
    auto put_u64 = [&put](std::uint64_t v) { put(&v, 8); };
    put(&kModelVersion, 4);
    const std::string header = model_header(m).serialize();
    put_u64(header.size());
    out += header;
    put_u64(m.tensors.size());
    for (std::size_t i = 0; i < m.tensors.size(); ++i) {
        put_u64(m.names[i].size());
        out += m.names[i];
        put_u64(static_cast<std::uint64_t>(m.tensors[i].rows()));
        put_u64(static_cast<std::uint64_t>(m.tensors[i].cols()));
        put(m.tensors[i].data(), static_cast<std::size_t>(m.tensors[i].size()) * sizeof(double));
    }
    Fnv1a h;
    h.update(out);
    put_u64(h.digest());
    return out;
}

inline ShredModel deserialize_model(const std::string& bytes) {
    std::size_t pos = 0;
    auto take = [&](void* p, std::size_t n) {
        if (pos + n > bytes.size()) throw FormatError("model file is truncated");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    };
    auto take_u64 = [&]() {
        std::uint64_t v = 0;
        take(&v, 8);
        return v;
    };
    auto take_str = [&](std::uint64_t n) {
        if (n > bytes.size() - pos) throw FormatError("model file is truncated");
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kModelMagic, 8) != 0) throw FormatError("not a model file");
    pos = 8;
    std::uint32_t version = 0;
    take(&version, 4);
    if (version != kModelVersion)
        throw FormatError("model file version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kModelVersion) + ")");
    if (bytes.size() < 20) throw FormatError("model file is truncated");
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    Fnv1a h;
    h.update(std::string_view(bytes).substr(0, bytes.size() - 8));
    if (stored != h.digest())
        throw FormatError("model file is corrupt or truncated (checksum mismatch)");

    const KeyValueDoc header = KeyValueDoc::parse(take_str(take_u64()));
    ShredModel m;
    m.arch = Architecture::from_keyvalue(header);
    m.scaling = dataset::ScalingParams::from_keyvalue(header.section("scaling"));
    const auto nb = static_cast<std::size_t>(header.get_int_or("output.block_count", 0));
    for (std::size_t i = 0; i < nb; ++i) {
        const std::string p = "output.block." + std::to_string(i);
        m.blocks.push_back({header.get(p + ".basis"), static_cast<std::size_t>(header.get_int(p + ".offset")),
                            static_cast<std::size_t>(header.get_int(p + ".width"))});
    }
    const ShredModel shape = make_model(m.arch, 0);
    const std::uint64_t count = take_u64();
    if (count != shape.tensors.size()) throw FormatError("model tensor count does not match its architecture");
    for (std::size_t i = 0; i < count; ++i) {
        std::string name = take_str(take_u64());
        const std::uint64_t rows = take_u64(), cols = take_u64();
        if (name != shape.names[i] || rows != static_cast<std::uint64_t>(shape.tensors[i].rows()) ||
            cols != static_cast<std::uint64_t>(shape.tensors[i].cols()))
            throw FormatError("tensor '" + name + "' does not match the architecture");
        Mat t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        take(t.data(), static_cast<std::size_t>(rows * cols) * sizeof(double));
        m.tensors.push_back(std::move(t));
        m.names.push_back(std::move(name));
    }
    if (pos + 8 != bytes.size()) throw FormatError("model file has trailing data");
    if (static_cast<std::size_t>(header.get_int("model.parameter_count")) != m.parameter_count())
        throw FormatError("model parameter count does not match its header");
    return m;
}

inline void save_model(const ShredModel& m, const std::filesystem::path& path) {
    const std::string bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

inline ShredModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace mhdshred::shred
