#pragma once

// Small text helpers shared by the file formats: round-trip number formatting,
// strict number parsing, and key/value sidecar files.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dpd/errors.hpp"

namespace dpd::text {

/// Shortest decimal representation that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s) {
    s = trim(s);
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("not a number: '" + std::string(s) + "'");
    return v;
}

template <typename Int = long long>
Int parse_int(std::string_view s) {
    s = trim(s);
    Int v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("not an integer: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

/// Write via a temporary file and rename so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

/// `key: value` lines; '#' starts a comment. Later keys override earlier ones.
using KeyValues = std::map<std::string, std::string, std::less<>>;

inline KeyValues parse_key_values(const std::vector<std::string>& lines, char sep = ':') {
    KeyValues kv;
    for (const auto& raw : lines) {
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto pos = line.find(sep);
        if (pos == std::string_view::npos) throw ParseError("expected 'key" + std::string(1, sep) + " value': " + raw);
        kv[std::string(trim(line.substr(0, pos)))] = std::string(trim(line.substr(pos + 1)));
    }
    return kv;
}

inline std::string format_key_values(const KeyValues& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << ": " << v << '\n';
    return os.str();
}

inline const std::string& require(const KeyValues& kv, std::string_view key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("missing key '" + std::string(key) + "'");
    return it->second;
}

} // namespace dpd::text
