#pragma once

// Flat "key = value" text with optional [section] headers. Keys are stored
// fully qualified as "section.key" and kept in insertion order so that
// serialization is stable and diffable.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mhdshred/error.hpp"

namespace mhdshred {

/// 64-bit FNV-1a.
class Fnv1a {
public:
    void update(std::string_view bytes) noexcept {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t digest() const noexcept { return state_; }
    std::string hex() const {
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << state_;
        return os.str();
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_text(std::string_view text) {
    Fnv1a h;
    h.update(text);
    return h.hex();
}

inline std::string hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string() + " for hashing");
    Fnv1a h;
    std::string buf(1 << 16, '\0');
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
    }
    return h.hex();
}

/// Round-trip exact decimal form of a double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

class KeyValueDoc {
public:
    void set(const std::string& key, std::string value) {
        for (auto& [k, v] : entries_)
            if (k == key) {
                v = std::move(value);
                return;
            }
        entries_.emplace_back(key, std::move(value));
    }
    void set(const std::string& key, double value) { set(key, format_double(value)); }
    void set(const std::string& key, int value) { set(key, std::to_string(value)); }
    void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
    void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
    void set(const std::string& key, const char* value) { set(key, std::string(value)); }

    bool has(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return true;
        return false;
    }

    const std::string& get(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return v;
        throw ConfigurationError("missing key '" + key + "'");
    }
    std::string get_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? get(key) : fallback;
    }

    double get_double(const std::string& key) const {
        const std::string& s = get(key);
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ConfigurationError("key '" + key + "': '" + s + "' is not a number");
        return v;
    }
    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    long long get_int(const std::string& key) const {
        const std::string& s = get(key);
        long long v = 0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ConfigurationError("key '" + key + "': '" + s + "' is not an integer");
        return v;
    }
    long long get_int_or(const std::string& key, long long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }
    bool get_bool_or(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string& s = get(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw ConfigurationError("key '" + key + "': '" + s + "' is not a boolean");
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const& noexcept { return entries_; }
    /// By value on temporaries, so `for (... : doc().entries())` is safe.
    std::vector<std::pair<std::string, std::string>> entries() && { return std::move(entries_); }

    /// Entries whose key starts with "prefix.", with the prefix removed.
    KeyValueDoc section(const std::string& prefix) const {
        KeyValueDoc out;
        const std::string p = prefix + ".";
        for (const auto& [k, v] : entries_)
            if (k.rfind(p, 0) == 0) out.entries_.emplace_back(k.substr(p.size()), v);
        return out;
    }
    void merge(const KeyValueDoc& other, const std::string& prefix = {}) {
        for (const auto& [k, v] : other.entries_) set(prefix.empty() ? k : prefix + "." + k, v);
    }

    std::string serialize() const {
        std::ostringstream os;
        std::string current;
        for (const auto& [k, v] : entries_) {
            const auto dot = k.find('.');
            const std::string sec = dot == std::string::npos ? std::string() : k.substr(0, dot);
            const std::string name = dot == std::string::npos ? k : k.substr(dot + 1);
            if (sec != current) {
                if (!sec.empty()) os << (os.tellp() > 0 ? "\n" : "") << "[" << sec << "]\n";
                current = sec;
            }
            os << name << " = " << v << "\n";
        }
        return os.str();
    }

    static KeyValueDoc parse(std::string_view text) {
        KeyValueDoc doc;
        std::string section;
        std::size_t line_no = 0;
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
            if (body.empty()) continue;
            if (body.front() == '[') {
                if (body.back() != ']') throw ConfigurationError("line " + std::to_string(line_no) + ": bad section");
                section = trim(std::string_view(body).substr(1, body.size() - 2));
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw ConfigurationError("line " + std::to_string(line_no) + ": expected key = value");
            const std::string key = trim(std::string_view(body).substr(0, eq));
            const std::string value = trim(std::string_view(body).substr(eq + 1));
            if (key.empty()) throw ConfigurationError("line " + std::to_string(line_no) + ": empty key");
            doc.set(section.empty() ? key : section + "." + key, value);
        }
        return doc;
    }

    static KeyValueDoc load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigurationError("cannot open " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw ConfigurationError("cannot write " + path.string());
        out << serialize();
    }

    std::string hash() const { return hash_text(serialize()); }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace mhdshred
