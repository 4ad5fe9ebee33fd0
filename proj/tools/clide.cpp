// clide: command-line front end for the detector library.
//
// Exit codes: 0 ok, 1 I/O, 2 validation/format/degenerate input, 3 numerical.
// Failures print one JSON object on stderr: {"error":kind,"message":...,"exit_code":n}.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "clide/clide.hpp"

namespace {

using clide::io::Json;

enum class LogLevel { error, warn, info };

LogLevel g_log = LogLevel::warn;

void warn(const std::string& msg) {
    if (g_log >= LogLevel::warn) std::cerr << "warning: " << msg << '\n';
}

void info(const std::string& msg) {
    if (g_log >= LogLevel::info) std::cerr << "info: " << msg << '\n';
}

int exit_code_for(const std::string& kind) {
    if (kind == "IoError") return 1;
    if (kind == "NumericalError") return 3;
    return 2;
}

int report_error(const std::string& kind, const std::string& message) {
    const int code = exit_code_for(kind);
    Json j;
    j["error"] = kind;
    j["message"] = message;
    j["exit_code"] = code;
    std::cerr << j.dump() << '\n';
    return code;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_csv(const std::string& path) { return ends_with(path, ".csv") || ends_with(path, ".CSV"); }

clide::EmbeddingMatrix load_embeddings(const std::string& path) {
    return is_csv(path) ? clide::read_csv(path) : clide::read_embf(path);
}

void save_embeddings(const clide::EmbeddingMatrix& m, const std::string& path) {
    if (is_csv(path))
        clide::write_csv(m, path);
    else
        clide::write_embf(m, path);
}

void emit_text(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-")
        std::cout << text;
    else
        clide::detail::write_text_file(out, text);
}

std::size_t default_threads() {
    if (const char* env = std::getenv("CLIDE_THREADS")) {
        const auto v = clide::detail::parse_int(env);
        if (!v || *v < 1) throw clide::ValidationError("CLIDE_THREADS must be a positive integer");
        return static_cast<std::size_t>(*v);
    }
    return 1;
}

// ---- score ----

struct ScoreArgs {
    std::string rep, queries, model, out;
    std::size_t k = 500;
    std::size_t m = 400;
    std::string mode = "local";
    bool derive_k = false;
    bool strict = false;
    bool skip_errors = false;
    std::size_t threads = 0;
};

int cmd_score(const ScoreArgs& a, const CLI::App& sub) {
    const auto queries = load_embeddings(a.queries);
    std::optional<clide::EmbeddingMatrix> rep;
    if (!a.rep.empty()) rep.emplace(load_embeddings(a.rep));

    clide::DetectorConfig cfg;
    cfg.m = a.m;
    cfg.k = a.derive_k ? a.m + 100 : a.k;
    cfg.mode = clide::parse_mode(a.mode);
    cfg.strict = a.strict;

    std::optional<clide::Detector> det;
    if (!a.model.empty()) {
        if (sub.count("--mode") && cfg.mode != clide::WhiteningMode::global) {
            throw clide::ValidationError("--model implies global mode");
        }
        auto model = clide::read_whtm(a.model);
        if (sub.count("-m") && model.m_requested != std::min(a.m, model.dim())) {
            throw clide::ValidationError("-m " + std::to_string(a.m) + " does not match the model's m=" +
                                         std::to_string(model.m_requested));
        }
        std::size_t k_used = 0;
        if (rep) {
            if (rep->dim() != model.dim()) {
                throw clide::ValidationError("representative d=" + std::to_string(rep->dim()) +
                                             " does not match model d=" + std::to_string(model.dim()));
            }
            k_used = rep->rows();
        }
        det.emplace(std::move(model), k_used);
    } else {
        if (!rep) throw clide::ValidationError("score needs --rep or --model");
        det.emplace(*rep, cfg);
    }
    for (const auto& w : det->warnings()) warn(w);
    info("scoring " + std::to_string(queries.rows()) + " queries (k=" + std::to_string(det->k_effective()) +
         ", m=" + std::to_string(det->m_target()) + ", mode=" + std::string(clide::to_string(det->config().mode)) + ")");

    clide::BatchOptions opts;
    opts.threads = a.threads ? a.threads : default_threads();
    opts.skip_errors = a.skip_errors;
    const auto result = det->score_batch(queries, opts);
    for (const auto& f : result.failures) {
        warn("skipped row " + std::to_string(f.row) + " (id " + f.id + "): " + f.kind + ": " + f.message);
    }
    emit_text(clide::io::format_scores_csv(result.records), a.out);
    return 0;
}

// ---- calibrate / classify / evaluate ----

int cmd_calibrate(const std::string& scores, const std::string& mode, const std::string& out) {
    const auto records = clide::io::read_scores_csv(scores);
    const auto cal = clide::calibrate(records, clide::parse_mode(mode));
    emit_text(clide::io::dump(clide::io::to_json(cal)), out);
    return 0;
}

int cmd_classify(const std::string& scores, const std::string& calibration, const std::string& out) {
    const auto records = clide::io::read_scores_csv(scores);
    const auto cal = clide::io::read_calibration(calibration);
    std::string text = "id,criterion,label\n";
    for (const auto& r : records) {
        text += clide::detail::quote_csv_field(r.id) + ',' + clide::detail::format_double17(r.criterion) + ',' +
                std::string(clide::to_string(clide::classify(r, cal))) + '\n';
    }
    emit_text(text, out);
    return 0;
}

int cmd_evaluate(const std::vector<std::string>& real, const std::vector<std::string>& generated,
                 const std::string& calibration, const std::string& out) {
    if (real.size() != 1 && real.size() != generated.size()) {
        throw clide::ValidationError("give one --real file, or one per --generated file");
    }
    const auto cal = clide::io::read_calibration(calibration);
    Json reports = Json::array();
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const std::string& real_path = real.size() == 1 ? real.front() : real[i];
        const auto r = clide::io::read_scores_csv(real_path);
        const auto g = clide::io::read_scores_csv(generated[i]);
        const auto rep = clide::stats::evaluate(r, g, cal);
        if (rep.flipped) warn("flipped classification: auc < 0.5 for " + generated[i]);
        Json j;
        j["real"] = real_path;
        j["generated"] = generated[i];
        const Json metrics = clide::io::to_json(rep);
        for (auto it = metrics.begin(); it != metrics.end(); ++it) j[it.key()] = it.value();
        reports.push_back(std::move(j));
    }
    Json config;
    config["calibration"] = clide::io::to_json(cal);
    emit_text(clide::io::dump(clide::io::report_envelope("eval", std::move(config), std::move(reports))), out);
    return 0;
}

// ---- validate / whiten ----

int cmd_validate(const std::string& rep_path, std::size_t m, double holdout, std::uint64_t seed,
                 const std::string& out) {
    const auto rep = load_embeddings(rep_path);
    const auto report = clide::stats::validate_whitening(rep, m, holdout, seed);
    for (const auto& w : report.warnings) warn(w);
    Json config;
    config["rep"] = rep_path;
    config["m"] = m;
    config["holdout_fraction"] = holdout;
    config["seed"] = seed;
    Json reports = Json::array();
    reports.push_back(clide::io::to_json(report));
    emit_text(clide::io::dump(clide::io::report_envelope("normality", std::move(config), std::move(reports))), out);
    return 0;
}

int cmd_whiten(const std::string& rep_path, std::size_t m, const std::string& out) {
    const auto rep = load_embeddings(rep_path);
    const auto model = clide::linalg::fit_whitening(rep, m);
    for (const auto& w : model.warnings) warn(w);
    clide::write_whtm(model, out);
    info("wrote whitening model (d=" + std::to_string(model.dim()) + ", m=" + std::to_string(model.m) + ")");
    return 0;
}

// ---- synth / convert ----

struct SynthArgs {
    std::size_t d = 64;
    std::size_t m_active = 16;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    double top = 4.0;
    double bottom = 1.0;
    double residual = 0.01;
    double offset = 0.0;
    double center_norm = 0.0;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    auto spec = clide::synth::DomainSpec::make(a.d, a.m_active, a.seed, a.top, a.bottom, a.residual);
    if (a.center_norm != 0.0) {
        // Seeded direction on its own stream, scaled to the requested norm.
        clide::NormalSource rng(clide::substream_seed(a.seed, 4));
        spec.center.resize(a.d);
        double norm2 = 0.0;
        for (double& c : spec.center) {
            c = rng.normal();
            norm2 += c * c;
        }
        for (double& c : spec.center) c *= a.center_norm / std::sqrt(norm2);
    }
    const auto m = a.offset > 0.0 ? clide::synth::generate_offset_queries(spec, a.n, a.offset)
                                   : clide::synth::generate_domain(spec, a.n);
    save_embeddings(m, a.out);
    Json sidecar = clide::io::to_json(spec);
    sidecar["n"] = a.n;
    sidecar["offset_sigmas"] = a.offset;
    clide::detail::write_text_file(a.out + ".json", clide::io::dump(sidecar));
    return 0;
}

int cmd_convert(const std::string& in, const std::string& out) {
    save_embeddings(load_embeddings(in), out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"clide: conditional-likelihood detection of generated images from embeddings"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "error | warn | info")
        ->check(CLI::IsMember({"error", "warn", "info"}));

    ScoreArgs sa;
    auto* score = app.add_subcommand("score", "score query embeddings");
    score->add_option("--rep", sa.rep, "representative set (EMBF or .csv)");
    score->add_option("--queries,-q", sa.queries, "query embeddings")->required();
    score->add_option("-k", sa.k, "neighbors per query")->capture_default_str();
    score->add_option("-m", sa.m, "retained dimensions")->capture_default_str();
    score->add_option("--mode", sa.mode, "local | global")->check(CLI::IsMember({"local", "global"}))->capture_default_str();
    score->add_flag("--derive-k", sa.derive_k, "set k = m + 100");
    score->add_option("--model", sa.model, "saved whitening model (global mode)");
    score->add_flag("--strict", sa.strict, "fail when k exceeds the representative set");
    score->add_flag("--skip-errors", sa.skip_errors, "skip failing rows instead of stopping");
    score->add_option("--threads", sa.threads, "worker threads (default: $CLIDE_THREADS or 1)");
    score->add_option("--out,-o", sa.out, "scores CSV (default stdout)");

    std::string cal_scores, cal_mode = "local", cal_out;
    auto* calibrate = app.add_subcommand("calibrate", "threshold from real-image scores");
    calibrate->add_option("--scores", cal_scores)->required();
    calibrate->add_option("--mode", cal_mode, "mode echoed into the calibration")
        ->check(CLI::IsMember({"local", "global"}))->capture_default_str();
    calibrate->add_option("--out,-o", cal_out);

    std::string cls_scores, cls_cal, cls_out;
    auto* classify = app.add_subcommand("classify", "label scores with a calibration");
    classify->add_option("--scores", cls_scores)->required();
    classify->add_option("--calibration", cls_cal)->required();
    classify->add_option("--out,-o", cls_out);

    std::vector<std::string> ev_real, ev_gen;
    std::string ev_cal, ev_out;
    auto* evaluate = app.add_subcommand("evaluate", "AUC, AP, F1 and accuracy");
    evaluate->add_option("--real", ev_real, "real scores CSV (one, or one per --generated)")->required();
    evaluate->add_option("--generated", ev_gen, "generated scores CSV (repeatable)")->required();
    evaluate->add_option("--calibration", ev_cal)->required();
    evaluate->add_option("--out,-o", ev_out);

    std::string va_rep, va_out;
    std::size_t va_m = 0;
    double va_holdout = 0.2;
    std::uint64_t va_seed = 0;
    auto* validate = app.add_subcommand("validate", "normality of whitened held-out coordinates");
    validate->add_option("--rep", va_rep)->required();
    validate->add_option("-m", va_m)->required();
    validate->add_option("--holdout", va_holdout)->capture_default_str();
    validate->add_option("--seed", va_seed)->capture_default_str();
    validate->add_option("--out,-o", va_out);

    std::string wh_rep, wh_out;
    std::size_t wh_m = 400;
    auto* whiten = app.add_subcommand("whiten", "fit and save a global whitening model");
    whiten->add_option("--rep", wh_rep)->required();
    whiten->add_option("-m", wh_m)->capture_default_str();
    whiten->add_option("--out,-o", wh_out)->required();

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "generate a synthetic low-rank Gaussian domain");
    synth->add_option("--d", sy.d)->capture_default_str();
    synth->add_option("--m-active", sy.m_active)->capture_default_str();
    synth->add_option("--n", sy.n)->capture_default_str();
    synth->add_option("--seed", sy.seed)->capture_default_str();
    synth->add_option("--top", sy.top, "largest dominant variance")->capture_default_str();
    synth->add_option("--bottom", sy.bottom, "smallest dominant variance")->capture_default_str();
    synth->add_option("--residual", sy.residual, "off-subspace variance")->capture_default_str();
    synth->add_option("--offset", sy.offset, "off-subspace displacement in dominant std units")->capture_default_str();
    synth->add_option("--center-norm", sy.center_norm)->capture_default_str();
    synth->add_option("--out,-o", sy.out)->required();

    std::string cv_in, cv_out;
    auto* convert = app.add_subcommand("convert", "convert between EMBF and CSV (by extension)");
    convert->add_option("--in,-i", cv_in)->required();
    convert->add_option("--out,-o", cv_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Error& e) {
        return report_error("UsageError", e.what());
    }
    g_log = log_level == "error" ? LogLevel::error : log_level == "info" ? LogLevel::info : LogLevel::warn;

    try {
        if (*score) return cmd_score(sa, *score);
        if (*calibrate) return cmd_calibrate(cal_scores, cal_mode, cal_out);
        if (*classify) return cmd_classify(cls_scores, cls_cal, cls_out);
        if (*evaluate) return cmd_evaluate(ev_real, ev_gen, ev_cal, ev_out);
        if (*validate) return cmd_validate(va_rep, va_m, va_holdout, va_seed, va_out);
        if (*whiten) return cmd_whiten(wh_rep, wh_m, wh_out);
        if (*synth) return cmd_synth(sy);
        if (*convert) return cmd_convert(cv_in, cv_out);
    } catch (const clide::Error& e) {
        return report_error(e.kind(), e.what());
    } catch (const std::bad_alloc&) {
        return report_error("NumericalError", "out of memory");
    }
    return 0;
}
