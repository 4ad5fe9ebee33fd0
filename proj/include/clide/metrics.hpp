#pragma once

// Ranking and classification metrics. Generated is the positive class and a
// higher score means "more likely generated".

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "clide/detector.hpp"
#include "clide/error.hpp"

namespace clide::stats {

namespace detail {

inline void require_nonempty(std::span<const double> real, std::span<const double> gen,
                             const char* what) {
    if (real.empty() || gen.empty()) {
        throw DegenerateInputError(std::string(what) + ": both score lists must be non-empty (real=" +
                                   std::to_string(real.size()) + ", generated=" +
                                   std::to_string(gen.size()) + ")");
    }
}

} // namespace detail

/// Mann-Whitney AUC: the fraction of (generated, real) pairs where the
/// generated score is higher, ties counting 1/2. Computed from mid-ranks in
/// O(n log n); every intermediate is an exact multiple of 1/2.
inline double auc(std::span<const double> real_scores, std::span<const double> gen_scores) {
    detail::require_nonempty(real_scores, gen_scores, "auc");
    struct Item {
        double score;
        bool positive;
    };
    std::vector<Item> items;
    items.reserve(real_scores.size() + gen_scores.size());
    for (double s : real_scores) items.push_back({s, false});
    for (double s : gen_scores) items.push_back({s, true});
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

    // Twice the positive rank sum, kept integral.
    double twice_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        std::size_t pos_in_group = 0;
        while (j < items.size() && items[j].score == items[i].score) {
            pos_in_group += items[j].positive ? 1 : 0;
            ++j;
        }
        // Ranks i+1..j share mid-rank (i + 1 + j) / 2.
        twice_rank_sum += static_cast<double>(pos_in_group) * static_cast<double>(i + 1 + j);
        i = j;
    }
    const double np = static_cast<double>(gen_scores.size());
    const double nn = static_cast<double>(real_scores.size());
    const double u = (twice_rank_sum - np * (np + 1.0)) / 2.0;
    return u / (np * nn);
}

/// Average precision: mean over positives of the precision at each
/// positive's rank. Ranking is by descending score; at equal scores negatives
/// rank before positives, then input order.
inline double average_precision(std::span<const double> real_scores, std::span<const double> gen_scores) {
    detail::require_nonempty(real_scores, gen_scores, "average_precision");
    struct Item {
        double score;
        bool positive;
        std::size_t order;
    };
    std::vector<Item> items;
    items.reserve(real_scores.size() + gen_scores.size());
    for (std::size_t i = 0; i < real_scores.size(); ++i) items.push_back({real_scores[i], false, i});
    for (std::size_t i = 0; i < gen_scores.size(); ++i) items.push_back({gen_scores[i], true, i});
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.positive != b.positive) return !a.positive;
        return a.order < b.order;
    });
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < items.size(); ++r) {
        if (items[r].positive) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    return sum / static_cast<double>(gen_scores.size());
}

struct F1Accuracy {
    double f1 = 0.0;
    double accuracy = 0.0;
};

/// F1 = 2PR / (P + R), 0 when P + R = 0; accuracy = correct / total.
inline F1Accuracy f1_accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
    if (predicted.size() != truth.size()) {
        throw ValidationError("f1_accuracy: " + std::to_string(predicted.size()) +
                              " predictions for " + std::to_string(truth.size()) + " labels");
    }
    if (predicted.empty()) throw DegenerateInputError("f1_accuracy: no labels");
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] == Label::generated;
        const bool t = truth[i] == Label::generated;
        tp += (p && t);
        fp += (p && !t);
        fn += (!p && t);
        correct += (p == t);
    }
    F1Accuracy out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return out;
}

struct EvalReport {
    double auc = 0.0;
    double ap = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    std::size_t n_real = 0;
    std::size_t n_generated = 0;
    /// AUC below 1/2: generated content systematically scores as more real.
    bool flipped = false;
};

/// All four metrics for criterion lists; labels come from the calibrated
/// threshold.
inline EvalReport evaluate(std::span<const double> real_criteria, std::span<const double> gen_criteria,
                           const CalibrationResult& cal) {
    EvalReport r;
    r.auc = auc(real_criteria, gen_criteria);
    r.ap = average_precision(real_criteria, gen_criteria);
    std::vector<Label> predicted, truth;
    predicted.reserve(real_criteria.size() + gen_criteria.size());
    truth.reserve(predicted.capacity());
    for (double c : real_criteria) {
        predicted.push_back(classify(c, cal));
        truth.push_back(Label::real);
    }
    for (double c : gen_criteria) {
        predicted.push_back(classify(c, cal));
        truth.push_back(Label::generated);
    }
    const auto fa = f1_accuracy(predicted, truth);
    r.f1 = fa.f1;
    r.accuracy = fa.accuracy;
    r.n_real = real_criteria.size();
    r.n_generated = gen_criteria.size();
    r.flipped = r.auc < 0.5;
    return r;
}

inline std::vector<double> criteria_of(std::span<const ScoreRecord> records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.criterion);
    return out;
}

/// Record-level evaluation; every record must share the calibration's m.
inline EvalReport evaluate(std::span<const ScoreRecord> real, std::span<const ScoreRecord> generated,
                           const CalibrationResult& cal) {
    for (auto group : {real, generated}) {
        for (const auto& r : group) {
            if (r.m_used != cal.m) {
                throw ValidationError("score '" + r.id + "' has m_used=" + std::to_string(r.m_used) +
                                      " but calibration used m=" + std::to_string(cal.m));
            }
        }
    }
    const auto rc = criteria_of(real);
    const auto gc = criteria_of(generated);
    return evaluate(rc, gc, cal);
}

} // namespace clide::stats
