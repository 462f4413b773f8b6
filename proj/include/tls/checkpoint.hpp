#pragma once
// Binary checkpoints: "TLSC", u32 version, u64 header length, JSON header,
// u64 parameter count, little-endian f64 parameters.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "tls/io.hpp"
#include "tls/model.hpp"

namespace tls {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Json header;
    ParamVector params;
};

namespace detail {

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& at, const std::string& what) {
    if (in.size() - at < sizeof(T)) throw IoError("truncated checkpoint '" + what + "'");
    T v;
    std::memcpy(&v, in.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
    const std::string header = ckpt.header.dump();
    std::string out = "TLSC";
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put<std::uint64_t>(out, header.size());
    out += header;
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.params.size()));
    for (Eigen::Index i = 0; i < ckpt.params.size(); ++i) detail::put<double>(out, ckpt.params[i]);
    return out;
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) { write_atomic(path, encode_checkpoint(ckpt)); }

inline Checkpoint load_checkpoint(const fs::path& path) {
    const std::string bytes = read_text(path);
    const std::string name = path.string();
    if (bytes.size() < 4 || bytes.compare(0, 4, "TLSC") != 0) throw IoError("'" + name + "' is not a checkpoint");
    std::size_t at = 4;
    const auto version = detail::take<std::uint32_t>(bytes, at, name);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " in '" + name + "'");
    const auto header_len = detail::take<std::uint64_t>(bytes, at, name);
    if (bytes.size() - at < header_len) throw IoError("truncated checkpoint '" + name + "'");
    Checkpoint ckpt;
    try {
        ckpt.header = Json::parse(bytes.substr(at, header_len));
    } catch (const Json::parse_error&) {
        throw IoError("corrupt checkpoint header in '" + name + "'");
    }
    at += header_len;
    const auto n = detail::take<std::uint64_t>(bytes, at, name);
    if ((bytes.size() - at) / sizeof(double) < n || (bytes.size() - at) != n * sizeof(double))
        throw IoError("checkpoint '" + name + "' has the wrong parameter count");
    ckpt.params.resize(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) ckpt.params[static_cast<Eigen::Index>(i)] = detail::take<double>(bytes, at, name);
    return ckpt;
}

}  // namespace tls
