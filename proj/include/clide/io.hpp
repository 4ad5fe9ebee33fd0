#pragma once

// Text formats: scores CSV, calibration JSON and report JSON.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clide/detail/binary.hpp"
#include "clide/detail/csv.hpp"
#include "clide/detector.hpp"
#include "clide/error.hpp"
#include "clide/metrics.hpp"
#include "clide/normality.hpp"
#include "clide/synth.hpp"

namespace clide::io {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::string_view kScoresHeader = "id,log_likelihood,criterion,m_used,k_used,truncated";

// ---- scores CSV ----

inline std::string format_scores_csv(std::span<const ScoreRecord> records) {
    std::string out(kScoresHeader);
    out += '\n';
    for (const auto& r : records) {
        out += detail::quote_csv_field(r.id);
        out += ',';
        out += detail::format_double17(r.log_likelihood);
        out += ',';
        out += detail::format_double17(r.criterion);
        out += ',';
        out += std::to_string(r.m_used);
        out += ',';
        out += std::to_string(r.k_used);
        out += ',';
        out += r.neighbor_truncated ? '1' : '0';
        out += '\n';
    }
    return out;
}

inline std::vector<ScoreRecord> parse_scores_csv(std::string_view text, const std::string& what = "scores") {
    const auto lines = detail::split_lines(text);
    if (lines.empty() || detail::trim(lines.front()) != kScoresHeader) {
        throw FormatError(what + ": expected header '" + std::string(kScoresHeader) + "'");
    }
    std::vector<ScoreRecord> out;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        const auto f = detail::split_csv_line(lines[li], line_no);
        auto fail = [&](const std::string& msg) {
            return FormatError(what + " line " + std::to_string(line_no) + ": " + msg);
        };
        if (f.size() != 6) throw fail("expected 6 fields, got " + std::to_string(f.size()));
        ScoreRecord r;
        r.id = f[0];
        const auto ll = detail::parse_double(f[1]);
        const auto crit = detail::parse_double(f[2]);
        const auto m = detail::parse_int(f[3]);
        const auto k = detail::parse_int(f[4]);
        const auto t = detail::parse_int(f[5]);
        if (!ll || !std::isfinite(*ll)) throw fail("bad log_likelihood '" + f[1] + "'");
        if (!crit || !std::isfinite(*crit)) throw fail("bad criterion '" + f[2] + "'");
        if (!m || *m < 1) throw fail("bad m_used '" + f[3] + "'");
        if (!k || *k < 0) throw fail("bad k_used '" + f[4] + "'");
        if (!t || (*t != 0 && *t != 1)) throw fail("truncated must be 0 or 1");
        if (*crit != -*ll) throw fail("criterion is not the negated log_likelihood");
        r.log_likelihood = *ll;
        r.criterion = *crit;
        r.m_used = static_cast<std::size_t>(*m);
        r.k_used = static_cast<std::size_t>(*k);
        r.neighbor_truncated = *t == 1;
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<ScoreRecord> read_scores_csv(const std::string& path) {
    return parse_scores_csv(detail::read_text_file(path), "scores '" + path + "'");
}

inline void write_scores_csv(std::span<const ScoreRecord> records, const std::string& path) {
    detail::write_text_file(path, format_scores_csv(records));
}

// ---- calibration JSON ----

inline Json to_json(const CalibrationResult& c) {
    Json j;
    j["threshold"] = c.threshold;
    j["mean"] = c.mean;
    j["std"] = c.std;
    j["n"] = c.n;
    j["direction"] = c.direction;
    j["m"] = c.m;
    j["k"] = c.k;
    j["mode"] = std::string(to_string(c.mode));
    return j;
}

inline CalibrationResult calibration_from_json(const Json& j, const std::string& what = "calibration") {
    try {
        CalibrationResult c;
        c.threshold = j.at("threshold").get<double>();
        c.mean = j.at("mean").get<double>();
        c.std = j.at("std").get<double>();
        c.n = j.at("n").get<std::size_t>();
        c.direction = j.at("direction").get<std::string>();
        c.m = j.at("m").get<std::size_t>();
        c.k = j.at("k").get<std::size_t>();
        c.mode = parse_mode(j.at("mode").get<std::string>());
        if (c.direction != kHigherIsGenerated) {
            throw ValidationError(what + ": unsupported direction '" + c.direction + "'");
        }
        if (!std::isfinite(c.threshold) || !std::isfinite(c.mean) || !std::isfinite(c.std) || c.std < 0.0) {
            throw ValidationError(what + ": threshold, mean and std must be finite (std >= 0)");
        }
        if (c.n < 2) throw ValidationError(what + ": n must be >= 2");
        return c;
    } catch (const Json::exception& e) {
        throw FormatError(what + ": " + e.what());
    }
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json parse_json(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw FormatError(what + ": " + e.what());
    }
}

inline void write_calibration(const CalibrationResult& c, const std::string& path) {
    detail::write_text_file(path, dump(to_json(c)));
}

inline CalibrationResult read_calibration(const std::string& path) {
    const std::string what = "calibration '" + path + "'";
    return calibration_from_json(parse_json(detail::read_text_file(path), what), what);
}

// ---- reports ----

inline Json to_json(const stats::EvalReport& r) {
    Json j;
    j["auc"] = r.auc;
    j["ap"] = r.ap;
    j["f1"] = r.f1;
    j["accuracy"] = r.accuracy;
    j["n_real"] = r.n_real;
    j["n_generated"] = r.n_generated;
    j["flipped"] = r.flipped;
    return j;
}

inline Json to_json(const stats::NormalityReport& r) {
    Json j;
    j["pass_fraction"] = r.pass_fraction;
    j["alpha"] = r.alpha;
    j["m"] = r.m;
    j["m_requested"] = r.m_requested;
    j["n_fit"] = r.n_fit;
    j["n_holdout"] = r.n_holdout;
    j["seed"] = r.seed;
    Json coords = Json::array();
    for (const auto& c : r.per_coordinate) {
        Json cj;
        cj["coordinate"] = c.coordinate;
        cj["ad_a2"] = c.ad_a2;
        cj["ad_p_value"] = c.ad_p_value;
        cj["ad_reject"] = c.ad_reject;
        cj["dp_k2"] = c.dp_k2;
        cj["dp_z_skew"] = c.dp_z_skew;
        cj["dp_z_kurtosis"] = c.dp_z_kurtosis;
        cj["dp_p_value"] = c.dp_p_value;
        cj["dp_reject"] = c.dp_reject;
        coords.push_back(std::move(cj));
    }
    j["per_coordinate"] = std::move(coords);
    j["warnings"] = r.warnings;
    return j;
}

/// Versioned envelope: {"schema_version", "kind", "config", "reports": [...]}.
inline Json report_envelope(std::string_view kind, Json config, Json reports) {
    Json j;
    j["schema_version"] = kReportSchemaVersion;
    j["kind"] = std::string(kind);
    j["config"] = std::move(config);
    j["reports"] = std::move(reports);
    return j;
}

// ---- domain spec sidecar ----

inline Json to_json(const synth::DomainSpec& s) {
    Json j;
    j["d"] = s.d;
    j["m_active"] = s.m_active;
    j["spectrum"] = s.spectrum;
    j["residual_sigma"] = s.residual_sigma;
    j["center"] = s.center;
    j["seed"] = s.seed;
    return j;
}

inline synth::DomainSpec domain_spec_from_json(const Json& j, const std::string& what = "domain spec") {
    try {
        synth::DomainSpec s;
        s.d = j.at("d").get<std::size_t>();
        s.m_active = j.at("m_active").get<std::size_t>();
        s.spectrum = j.at("spectrum").get<std::vector<double>>();
        s.residual_sigma = j.at("residual_sigma").get<double>();
        s.center = j.at("center").get<std::vector<double>>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.validate();
        return s;
    } catch (const Json::exception& e) {
        throw FormatError(what + ": " + e.what());
    }
}

} // namespace clide::io
