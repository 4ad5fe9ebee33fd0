#pragma once

// EMBF: the on-disk embedding matrix format. All fields little-endian.
//
//   "EMBF"        4 bytes magic
//   version       u8   = 1
//   dtype         u8   = 1 (float32)
//   reserved      u16  = 0
//   d             u32
//   n             u64
//   payload       n*d float32, row-major
//   has_ids       u8   (0 or 1)
//   ids           if has_ids: n records of (len u16, UTF-8 bytes)
//
// Anything after the last record is a format error.

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "clide/detail/binary.hpp"
#include "clide/detail/csv.hpp"
#include "clide/embedding.hpp"
#include "clide/error.hpp"

namespace clide {

inline constexpr std::string_view kEmbfMagic = "EMBF";
inline constexpr std::uint8_t kEmbfVersion = 1;
inline constexpr std::uint8_t kEmbfDtypeFloat32 = 1;

inline std::vector<char> encode_embf(const EmbeddingMatrix& m) {
    if (m.dim() > std::numeric_limits<std::uint32_t>::max()) {
        throw ValidationError("EMBF: d does not fit in u32");
    }
    detail::ByteWriter w;
    w.bytes(kEmbfMagic);
    w.uint(kEmbfVersion);
    w.uint(kEmbfDtypeFloat32);
    w.uint(std::uint16_t{0});
    w.uint(static_cast<std::uint32_t>(m.dim()));
    w.uint(static_cast<std::uint64_t>(m.rows()));
    for (float v : m.values()) w.f32(v);
    w.uint(static_cast<std::uint8_t>(m.has_ids() ? 1 : 0));
    if (m.has_ids()) {
        for (const auto& id : m.ids()) {
            if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
                throw ValidationError("EMBF: id longer than 65535 bytes");
            }
            w.uint(static_cast<std::uint16_t>(id.size()));
            w.bytes(id);
        }
    }
    return w.buffer();
}

inline EmbeddingMatrix decode_embf(const std::vector<char>& buf, const std::string& what = "EMBF") {
    detail::ByteReader r(buf, what);
    if (buf.size() < 4 || r.bytes(4) != kEmbfMagic) {
        throw FormatError(what + ": bad magic (expected \"EMBF\")");
    }
    const auto version = r.uint<std::uint8_t>();
    if (version != kEmbfVersion) {
        throw FormatError(what + ": unsupported version " + std::to_string(version));
    }
    const auto dtype = r.uint<std::uint8_t>();
    if (dtype != kEmbfDtypeFloat32) {
        throw FormatError(what + ": unsupported dtype " + std::to_string(dtype));
    }
    if (r.uint<std::uint16_t>() != 0) throw FormatError(what + ": reserved field is not zero");
    const auto d = r.uint<std::uint32_t>();
    const auto n = r.uint<std::uint64_t>();
    if (d == 0 || n == 0) throw FormatError(what + ": d and n must be >= 1");
    // Guard the allocation before trusting n*d.
    if (n > r.remaining() / 4 / d) {
        throw FormatError(what + ": truncated payload (header declares n=" + std::to_string(n) +
                          ", d=" + std::to_string(d) + ")");
    }
    const std::size_t count = static_cast<std::size_t>(n) * d;
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = r.f32();
    const auto has_ids = r.uint<std::uint8_t>();
    if (has_ids > 1) throw FormatError(what + ": has_ids must be 0 or 1");
    std::vector<std::string> ids;
    if (has_ids == 1) {
        ids.reserve(static_cast<std::size_t>(n));
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto len = r.uint<std::uint16_t>();
            ids.emplace_back(r.bytes(len));
        }
    }
    if (r.remaining() != 0) {
        throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return EmbeddingMatrix(static_cast<std::size_t>(n), d, std::move(data), std::move(ids));
}

inline EmbeddingMatrix read_embf(const std::string& path) {
    return decode_embf(detail::read_file(path), "EMBF '" + path + "'");
}

inline void write_embf(const EmbeddingMatrix& m, const std::string& path) {
    detail::write_file(path, encode_embf(m));
}

/// Comma-separated numeric rows. When the first token of the first row is not
/// a number, the first column of every row is taken as a string id.
inline EmbeddingMatrix parse_csv(std::string_view text, const std::string& what = "CSV") {
    const auto lines = detail::split_lines(text);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_nos;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) continue;
        rows.push_back(detail::split_csv_line(lines[i], i + 1));
        line_nos.push_back(i + 1);
    }
    if (rows.empty()) throw FormatError(what + ": no rows");

    const bool with_ids = !detail::parse_double(rows.front().front()).has_value();
    const std::size_t offset = with_ids ? 1 : 0;
    if (rows.front().size() <= offset) throw FormatError(what + ": first row has no values");
    const std::size_t d = rows.front().size() - offset;

    std::vector<float> data;
    data.reserve(rows.size() * d);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != d + offset) {
            throw FormatError(what + " line " + std::to_string(line_nos[i]) + ": expected " +
                              std::to_string(d + offset) + " fields, got " +
                              std::to_string(f.size()));
        }
        if (with_ids) ids.emplace_back(detail::trim(f[0]));
        for (std::size_t j = offset; j < f.size(); ++j) {
            auto v = detail::parse_double(f[j]);
            if (!v) {
                throw FormatError(what + " line " + std::to_string(line_nos[i]) +
                                  ": cannot parse '" + f[j] + "' as a number");
            }
            data.push_back(static_cast<float>(*v));
        }
    }
    return EmbeddingMatrix(rows.size(), d, std::move(data), std::move(ids));
}

inline EmbeddingMatrix read_csv(const std::string& path) {
    return parse_csv(detail::read_text_file(path), "CSV '" + path + "'");
}

/// Inverse of parse_csv; float32 values printed with 9 significant digits,
/// enough to round-trip exactly.
inline std::string format_csv(const EmbeddingMatrix& m) {
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (m.has_ids()) {
            out += detail::quote_csv_field(m.ids()[i]);
            out += ',';
        }
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out += ',';
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(r[j]));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline void write_csv(const EmbeddingMatrix& m, const std::string& path) {
    detail::write_text_file(path, format_csv(m));
}

} // namespace clide
