#pragma once

// Conditional-likelihood detector: for each query, select the k most similar
// representative embeddings, whiten on their top-m eigen-directions and score
// the query's Gaussian log-likelihood there. The decision criterion is the
// negated log-likelihood, so larger values mean "more likely generated".

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "clide/embedding.hpp"
#include "clide/error.hpp"
#include "clide/likelihood.hpp"
#include "clide/linalg.hpp"
#include "clide/selector.hpp"
#include "clide/spectral.hpp"

namespace clide {

enum class WhiteningMode { local, global };

inline std::string_view to_string(WhiteningMode mode) noexcept {
    return mode == WhiteningMode::local ? "local" : "global";
}

inline WhiteningMode parse_mode(std::string_view s) {
    if (s == "local") return WhiteningMode::local;
    if (s == "global") return WhiteningMode::global;
    throw ValidationError("unknown whitening mode '" + std::string(s) + "' (expected local|global)");
}

struct DetectorConfig {
    std::size_t k = 500;
    std::size_t m = 400;
    WhiteningMode mode = WhiteningMode::local;
    /// Reject k > representative set size instead of clamping.
    bool strict = false;

    /// The k = m + 100 heuristic.
    static DetectorConfig with_derived_k(std::size_t m, WhiteningMode mode = WhiteningMode::local) {
        return {m + 100, m, mode, false};
    }

    void validate() const {
        if (k < 2) throw ValidationError("k must be >= 2, got " + std::to_string(k));
        if (m < 1) throw ValidationError("m must be >= 1, got " + std::to_string(m));
        if (m > k - 1) {
            throw ValidationError("m must be <= k - 1 (a covariance from k samples has rank <= k-1); got k=" +
                                  std::to_string(k) + ", m=" + std::to_string(m));
        }
    }
};

inline constexpr std::string_view kHigherIsGenerated = "higher_is_generated";

struct ScoreRecord {
    std::string id;
    double log_likelihood = 0.0;
    double criterion = 0.0;  // == -log_likelihood
    std::size_t m_used = 0;
    std::size_t k_used = 0;
    bool neighbor_truncated = false;
};

struct CalibrationResult {
    double threshold = 0.0;
    double mean = 0.0;
    double std = 0.0;  // population
    std::size_t n = 0;
    std::string direction{kHigherIsGenerated};
    std::size_t m = 0;
    std::size_t k = 0;
    WhiteningMode mode = WhiteningMode::local;
};

enum class Label { real, generated };

inline std::string_view to_string(Label label) noexcept {
    return label == Label::real ? "real" : "generated";
}

struct RowFailure {
    std::size_t row = 0;
    std::string id;
    std::string kind;
    std::string message;
};

struct BatchOptions {
    std::size_t threads = 1;
    /// Log and skip failing rows instead of stopping at the first failure.
    bool skip_errors = false;
};

struct BatchResult {
    std::vector<ScoreRecord> records;  // input order, failed rows omitted
    std::vector<RowFailure> failures;
};

namespace detail {

[[noreturn]] inline void rethrow_as(std::string_view kind, const std::string& message) {
    if (kind == "FormatError") throw FormatError(message);
    if (kind == "ValidationError") throw ValidationError(message);
    if (kind == "DegenerateInputError") throw DegenerateInputError(message);
    if (kind == "NumericalError") throw NumericalError(message);
    if (kind == "IoError") throw IoError(message);
    throw Error(message);
}

} // namespace detail

/// Scores queries against a fixed representative set. Construction does all
/// shared work (row norms, and the global whitening model when it is needed);
/// afterwards the detector is immutable and safe to use from many threads.
/// The representative matrix must outlive the detector.
class Detector {
public:
    Detector(const EmbeddingMatrix& rep, DetectorConfig cfg) : rep_(&rep), cfg_(cfg) {
        cfg_.validate();
        const std::size_t d = rep.dim();
        m_target_ = std::min(cfg_.m, d);
        if (m_target_ < cfg_.m) {
            warnings_.push_back("m=" + std::to_string(cfg_.m) + " exceeds embedding dimension d=" +
                                std::to_string(d) + "; using m=" + std::to_string(m_target_));
        }
        if (rep.rows() < m_target_ + 1) {
            throw DegenerateInputError("representative set has " + std::to_string(rep.rows()) +
                                       " rows; need at least m+1 = " + std::to_string(m_target_ + 1));
        }
        if (cfg_.mode == WhiteningMode::local) {
            index_.emplace(rep);
            k_effective_ = cfg_.k;
            if (cfg_.k > rep.rows()) {
                if (cfg_.strict) {
                    throw ValidationError("k=" + std::to_string(cfg_.k) +
                                          " exceeds representative set size " +
                                          std::to_string(rep.rows()) + " (strict mode)");
                }
                k_effective_ = rep.rows();
                truncated_ = true;
                warnings_.push_back("k=" + std::to_string(cfg_.k) +
                                    " exceeds representative set size " +
                                    std::to_string(rep.rows()) + "; using k=" +
                                    std::to_string(k_effective_));
            }
        } else {
            k_effective_ = rep.rows();
        }
        // The whole set is the neighbor set: local and global share one model.
        if (cfg_.mode == WhiteningMode::global || k_effective_ == rep.rows()) {
            global_.emplace(linalg::fit_whitening(rep, m_target_));
            for (const auto& w : global_->warnings) warnings_.push_back(w);
        }
    }

    /// Global-mode detector over a previously built whitening model.
    /// `k_used` is reported in every record (the model's sample count, if known).
    explicit Detector(linalg::WhiteningModel model, std::size_t k_used = 0)
        : rep_(nullptr), k_effective_(k_used) {
        cfg_.mode = WhiteningMode::global;
        cfg_.m = model.m_requested;
        m_target_ = model.m_requested;
        global_.emplace(std::move(model));
    }

    const DetectorConfig& config() const noexcept { return cfg_; }
    std::size_t m_target() const noexcept { return m_target_; }
    std::size_t k_effective() const noexcept { return k_effective_; }
    std::size_t dim() const noexcept { return global_ ? global_->dim() : rep_->dim(); }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    const linalg::WhiteningModel* global_model() const noexcept {
        return global_ ? &*global_ : nullptr;
    }

    template <std::floating_point T>
    ScoreRecord score(std::span<const T> query, std::string id = {}) const {
        if (query.size() != dim()) {
            throw ValidationError("query d=" + std::to_string(query.size()) +
                                  " does not match representative d=" + std::to_string(dim()));
        }
        if (global_) {
            // Zero-norm queries fail the same way as on the neighbor path.
            if (index_) (void)index_->query_norm(query);
            return make_record(std::move(id), conditional_log_likelihood(*global_, query), k_effective_);
        }
        return score_local(query, std::move(id));
    }

    ScoreRecord score(const EmbeddingVector& query, std::string id = {}) const {
        return score(query.values(), std::move(id));
    }

    /// Scores every row of `queries`; records keep input order and record i
    /// equals score(queries.row(i)) exactly, whatever the thread count.
    BatchResult score_batch(const EmbeddingMatrix& queries, const BatchOptions& opts = {}) const {
        if (queries.dim() != dim()) {
            throw ValidationError("query d=" + std::to_string(queries.dim()) +
                                  " does not match representative d=" + std::to_string(dim()));
        }
        const std::size_t n = queries.rows();
        std::vector<std::optional<ScoreRecord>> slots(n);
        std::vector<std::optional<RowFailure>> fails(n);

        auto run_range = [&](std::size_t begin, std::size_t end) {
            if (global_ && !index_) {
                // Tiled whitening; bit-identical to the per-row path.
                auto scores = conditional_log_likelihood_batch(*global_, queries, begin, end - begin);
                for (std::size_t i = begin; i < end; ++i) {
                    slots[i] = make_record(queries.id(i), scores[i - begin], k_effective_);
                }
                return;
            }
            for (std::size_t tile = begin; tile < end; tile += kQueryTile) {
                const std::size_t tile_end = std::min(end, tile + kQueryTile);
                // Shared pass over the representative rows for the tile's
                // valid queries; invalid ones take the per-row path and fail there.
                std::vector<const float*> ptrs;
                std::vector<double> qnorms;
                std::vector<std::size_t> slot_of(tile_end - tile, kNoSlot);
                if (!global_) {
                    for (std::size_t i = tile; i < tile_end; ++i) {
                        try {
                            qnorms.push_back(index_->query_norm(queries.row(i)));
                            slot_of[i - tile] = ptrs.size();
                            ptrs.push_back(queries.row(i).data());
                        } catch (const Error&) {
                        }
                    }
                }
                const auto sims = ptrs.empty() ? std::vector<std::vector<double>>{}
                                               : index_->similarities_many(std::span<const float* const>(ptrs), qnorms);
                for (std::size_t i = tile; i < tile_end; ++i) {
                    try {
                        const std::size_t slot = slot_of[i - tile];
                        slots[i] = slot == kNoSlot ? score(queries.row(i), queries.id(i))
                                                   : score_local(queries.row(i), sims[slot], queries.id(i));
                    } catch (const Error& e) {
                        fails[i] = RowFailure{i, queries.id(i), e.kind(), e.what()};
                        if (!opts.skip_errors) return;
                    }
                }
            }
        };

        const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(n, 1));
        if (threads == 1) {
            run_range(0, n);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(threads);
            const std::size_t chunk = (n + threads - 1) / threads;
            for (std::size_t t = 0; t < threads; ++t) {
                const std::size_t b = std::min(n, t * chunk);
                const std::size_t e = std::min(n, b + chunk);
                pool.emplace_back([&, t, b, e] {
                    try {
                        run_range(b, e);
                    } catch (...) {
                        errors[t] = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            for (auto& ep : errors)
                if (ep) std::rethrow_exception(ep);
        }

        BatchResult out;
        out.records.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (fails[i]) {
                if (!opts.skip_errors) {
                    detail::rethrow_as(fails[i]->kind, "row " + std::to_string(i) + " (id " +
                                                           fails[i]->id + "): " + fails[i]->message);
                }
                out.failures.push_back(std::move(*fails[i]));
            } else if (slots[i]) {
                out.records.push_back(std::move(*slots[i]));
            }
        }
        return out;
    }

private:
    ScoreRecord make_record(std::string id, const LikelihoodScore& s, std::size_t k_used) const {
        return {std::move(id), s.log_likelihood, -s.log_likelihood, s.m, k_used, truncated_};
    }

    static constexpr std::size_t kQueryTile = 8;
    static constexpr std::size_t kNoSlot = static_cast<std::size_t>(-1);

    template <std::floating_point T>
    ScoreRecord score_local(std::span<const T> query, std::string id) const {
        return score_local(query, index_->similarities(query), std::move(id));
    }

    template <std::floating_point T>
    ScoreRecord score_local(std::span<const T> query, const std::vector<double>& sims, std::string id) const {
        NeighborSet nb = RepresentativeIndex::select(sims, k_effective_);
        // Fixed (ascending) row order makes the subset statistics independent
        // of similarity order.
        std::sort(nb.indices.begin(), nb.indices.end());
        const std::size_t k = nb.indices.size();
        const std::size_t d = rep_->dim();

        linalg::Vector mu = linalg::Vector::Zero(static_cast<Eigen::Index>(d));
        for (std::size_t idx : nb.indices) {
            auto r = rep_->row(idx);
            for (std::size_t j = 0; j < d; ++j) mu[static_cast<Eigen::Index>(j)] += static_cast<double>(r[j]);
        }
        mu /= static_cast<double>(k);
        linalg::RowMatrix centered(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < k; ++i) {
            auto r = rep_->row(nb.indices[i]);
            for (std::size_t j = 0; j < d; ++j) {
                centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    static_cast<double>(r[j]) - mu[static_cast<Eigen::Index>(j)];
            }
        }
        linalg::Vector x_hat(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) {
            x_hat[static_cast<Eigen::Index>(j)] = static_cast<double>(query[j]) - mu[static_cast<Eigen::Index>(j)];
        }

        const linalg::SpectralNorm sn = linalg::spectral_squared_norm(centered, x_hat, m_target_);
        if (sn.m_used == 0) {
            std::string first;
            for (std::size_t i = 0; i < std::min<std::size_t>(k, 5); ++i) {
                first += (i ? "," : "") + std::to_string(nb.indices[i]);
            }
            throw NumericalError("degenerate neighbor covariance: k=" + std::to_string(k) +
                                 ", lambda_max=" + std::to_string(sn.lambda_max) +
                                 ", neighbor rows [" + first + (k > 5 ? ",...]" : "]"));
        }
        return make_record(std::move(id), score_from_squared_norm(sn.squared_norm, sn.m_used), k);
    }

    const EmbeddingMatrix* rep_;
    DetectorConfig cfg_;
    std::size_t m_target_ = 0;
    std::size_t k_effective_ = 0;
    bool truncated_ = false;
    std::optional<RepresentativeIndex> index_;
    std::optional<linalg::WhiteningModel> global_;
    std::vector<std::string> warnings_;
};

template <std::floating_point T>
ScoreRecord score(const EmbeddingMatrix& rep, std::span<const T> query, const DetectorConfig& cfg) {
    return Detector(rep, cfg).score(query);
}

inline BatchResult score_batch(const EmbeddingMatrix& rep, const EmbeddingMatrix& queries,
                               const DetectorConfig& cfg, const BatchOptions& opts = {}) {
    return Detector(rep, cfg).score_batch(queries, opts);
}

/// threshold = mean(criterion) + population std(criterion).
inline CalibrationResult calibrate(std::span<const ScoreRecord> real_scores,
                                   WhiteningMode mode = WhiteningMode::local) {
    const std::size_t n = real_scores.size();
    if (n < 2) {
        throw DegenerateInputError("calibration needs at least 2 scores, got " + std::to_string(n));
    }
    const std::size_t m = real_scores.front().m_used;
    std::size_t k = 0;
    for (const auto& r : real_scores) {
        if (r.m_used != m) {
            throw ValidationError("calibration scores mix m_used values (" + std::to_string(m) +
                                  " and " + std::to_string(r.m_used) +
                                  "); rerun scoring with a lower m");
        }
        k = std::max(k, r.k_used);
    }
    // Shifted accumulation: identical inputs give exactly zero spread.
    const double shift = real_scores.front().criterion;
    double sum = 0.0;
    for (const auto& r : real_scores) sum += r.criterion - shift;
    const double mean_offset = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : real_scores) {
        const double dev = (r.criterion - shift) - mean_offset;
        ss += dev * dev;
    }
    CalibrationResult cal;
    cal.mean = shift + mean_offset;
    cal.std = std::sqrt(ss / static_cast<double>(n));
    cal.threshold = cal.mean + cal.std;
    cal.n = n;
    cal.m = m;
    cal.k = k;
    cal.mode = mode;
    return cal;
}

/// generated iff criterion > threshold; the boundary itself is real.
inline Label classify(double criterion, const CalibrationResult& cal) noexcept {
    return criterion > cal.threshold ? Label::generated : Label::real;
}

inline Label classify(const ScoreRecord& record, const CalibrationResult& cal) {
    if (record.m_used != cal.m) {
        throw ValidationError("score '" + record.id + "' has m_used=" + std::to_string(record.m_used) +
                              " but calibration used m=" + std::to_string(cal.m));
    }
    return classify(record.criterion, cal);
}

} // namespace clide
