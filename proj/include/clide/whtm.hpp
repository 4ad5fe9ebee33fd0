#pragma once

// WHTM: serialized WhiteningModel, little-endian.
//
//   "WHTM" | version u8 = 1 | d u32 | m u32 | m_requested u32 |
//   mu (d float64) | eigenvalues (m float64) | w rows (m*d float64)

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "clide/detail/binary.hpp"
#include "clide/error.hpp"
#include "clide/linalg.hpp"

namespace clide {

inline constexpr std::string_view kWhtmMagic = "WHTM";
inline constexpr std::uint8_t kWhtmVersion = 1;

inline std::vector<char> encode_whtm(const linalg::WhiteningModel& model) {
    detail::ByteWriter w;
    w.bytes(kWhtmMagic);
    w.uint(kWhtmVersion);
    w.uint(static_cast<std::uint32_t>(model.dim()));
    w.uint(static_cast<std::uint32_t>(model.m));
    w.uint(static_cast<std::uint32_t>(model.m_requested));
    for (Eigen::Index j = 0; j < model.mu.size(); ++j) w.f64(model.mu[j]);
    for (Eigen::Index j = 0; j < model.eigenvalues.size(); ++j) w.f64(model.eigenvalues[j]);
    for (Eigen::Index r = 0; r < model.w.rows(); ++r)
        for (Eigen::Index c = 0; c < model.w.cols(); ++c) w.f64(model.w(r, c));
    return w.buffer();
}

inline linalg::WhiteningModel decode_whtm(const std::vector<char>& buf,
                                          const std::string& what = "WHTM") {
    detail::ByteReader r(buf, what);
    if (buf.size() < 4 || r.bytes(4) != kWhtmMagic) {
        throw FormatError(what + ": bad magic (expected \"WHTM\")");
    }
    const auto version = r.uint<std::uint8_t>();
    if (version != kWhtmVersion) {
        throw FormatError(what + ": unsupported version " + std::to_string(version));
    }
    const auto d = r.uint<std::uint32_t>();
    const auto m = r.uint<std::uint32_t>();
    const auto m_requested = r.uint<std::uint32_t>();
    if (d == 0 || m == 0 || m > m_requested || m_requested > d) {
        throw FormatError(what + ": inconsistent header (d=" + std::to_string(d) + ", m=" +
                          std::to_string(m) + ", m_requested=" + std::to_string(m_requested) + ")");
    }
    const std::size_t expected = 8ull * (d + m + static_cast<std::size_t>(m) * d);
    if (r.remaining() != expected) {
        throw FormatError(what + ": payload is " + std::to_string(r.remaining()) +
                          " bytes, expected " + std::to_string(expected));
    }
    linalg::WhiteningModel model;
    model.m = m;
    model.m_requested = m_requested;
    model.mu.resize(d);
    for (std::uint32_t j = 0; j < d; ++j) model.mu[j] = r.f64();
    model.eigenvalues.resize(m);
    for (std::uint32_t j = 0; j < m; ++j) model.eigenvalues[j] = r.f64();
    model.w.resize(m, d);
    for (std::uint32_t i = 0; i < m; ++i)
        for (std::uint32_t j = 0; j < d; ++j) model.w(i, j) = r.f64();
    if (!model.mu.allFinite() || !model.eigenvalues.allFinite() || !model.w.allFinite()) {
        throw ValidationError(what + ": non-finite values in model");
    }
    for (std::uint32_t j = 0; j < m; ++j) {
        if (!(model.eigenvalues[j] > 0.0) || (j > 0 && model.eigenvalues[j] > model.eigenvalues[j - 1])) {
            throw ValidationError(what + ": eigenvalues must be positive and descending");
        }
    }
    return model;
}

inline linalg::WhiteningModel read_whtm(const std::string& path) {
    return decode_whtm(detail::read_file(path), "WHTM '" + path + "'");
}

inline void write_whtm(const linalg::WhiteningModel& model, const std::string& path) {
    detail::write_file(path, encode_whtm(model));
}

} // namespace clide
