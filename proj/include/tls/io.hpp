#pragma once
// File plumbing: atomic writes, JSON documents, stable hashing.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "tls/error.hpp"

namespace tls {

using Json = nlohmann::json;
namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
    return buf.str();
}

/// Write to a sibling temp file, then rename over the target.
inline void write_atomic(const fs::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            fs::remove(tmp, ec);
            throw IoError("failed writing '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename onto '" + path.string() + "'");
    }
}

inline Json read_json(const fs::path& path) {
    const std::string text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw InvalidInput("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

inline void write_json(const fs::path& path, const Json& doc) { write_atomic(path, doc.dump(2) + "\n"); }

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Shortest round-trip text for a double, integral values without ".0";
/// non-finite values become "inf", "-inf" or "nan".
inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::string s = Json(x).dump();
    if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.resize(s.size() - 2);
    return s;
}

// JSON has no infinities; they travel as strings.
inline Json number_json(double x) {
    if (std::isfinite(x)) return x;
    return format_number(x);
}

inline double number_from_json(const Json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        if (s == "nan") return NAN;
    }
    throw InvalidInput("expected a number, got " + j.dump());
}

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw InvalidInput(std::string("field '") + key + "' has the wrong type");
    }
}

inline const Json& need(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw InvalidInput(std::string("missing field '") + key + "'");
    return j.at(key);
}

}  // namespace detail

}  // namespace tls
