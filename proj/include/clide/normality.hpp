#pragma once

// Normality checks for whitened coordinates. Both tests target a standard
// normal; the Anderson-Darling test is the fully specified (no estimated
// parameters) variant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "clide/embedding.hpp"
#include "clide/error.hpp"
#include "clide/linalg.hpp"
#include "clide/random.hpp"

namespace clide::stats {

inline constexpr double kAlpha = 0.05;
/// 5% critical value of A^2 for a fully specified distribution.
inline constexpr double kAdCritical5 = 2.492;
/// 95% quantile of chi-squared with 2 degrees of freedom.
inline constexpr double kChi2Df2Critical5 = 5.991;

inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// 1 - Phi(z), computed without cancellation.
inline double normal_sf(double z) noexcept { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

struct AndersonDarling {
    double a2 = 0.0;
    double p_value = 1.0;
    bool reject = false;
    std::vector<std::string> warnings;
};

/// Asymptotic P(A^2 > a2) for the fully specified case (Marsaglia & Marsaglia's
/// ADinf approximation).
inline double anderson_darling_pvalue(double a2) noexcept {
    if (!(a2 > 0.0)) return 1.0;
    double cdf;
    if (a2 < 2.0) {
        cdf = std::exp(-1.2337141 / a2) / std::sqrt(a2) *
              (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * a2) * a2) * a2) * a2) * a2);
    } else {
        cdf = std::exp(-std::exp(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * a2) * a2) * a2) * a2) * a2));
    }
    return std::clamp(1.0 - cdf, 0.0, 1.0);
}

/// A^2 against N(0, 1) with no sample-size precondition (formula level).
///   A^2 = -n - (1/n) sum_i (2i - 1) [ln Phi(z_(i)) + ln(1 - Phi(z_(n+1-i)))]
/// Tail probabilities that evaluate to 0 (or Phi to 1) are clamped to
/// Phi in [1e-300, 1 - 1e-16], with a warning.
inline AndersonDarling anderson_darling_statistic(std::span<const double> sample) {
    const std::size_t n = sample.size();
    if (n == 0) throw DegenerateInputError("anderson_darling: empty sample");
    std::vector<double> z(sample.begin(), sample.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(z[i])) {
            throw ValidationError("anderson_darling: non-finite value at index " + std::to_string(i));
        }
    }
    std::sort(z.begin(), z.end());

    std::size_t clamped = 0;
    auto log_lower = [&](double x) {
        double p = normal_cdf(x);
        if (p < 1e-300) {
            p = 1e-300;
            ++clamped;
        }
        return std::log(p);
    };
    auto log_upper = [&](double x) {
        double q = normal_sf(x);
        if (q < 1e-16) {
            q = 1e-16;
            ++clamped;
        }
        return std::log(q);
    };

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double weight = 2.0 * static_cast<double>(i) + 1.0;
        sum += weight * (log_lower(z[i]) + log_upper(z[n - 1 - i]));
    }
    AndersonDarling out;
    out.a2 = -static_cast<double>(n) - sum / static_cast<double>(n);
    out.p_value = anderson_darling_pvalue(out.a2);
    out.reject = out.a2 > kAdCritical5;
    if (clamped > 0) {
        out.warnings.push_back("anderson_darling: clamped " + std::to_string(clamped) +
                               " extreme normal-CDF evaluations");
    }
    return out;
}

inline AndersonDarling anderson_darling(std::span<const double> sample) {
    if (sample.size() < 8) {
        throw DegenerateInputError("anderson_darling needs n >= 8, got " + std::to_string(sample.size()));
    }
    return anderson_darling_statistic(sample);
}

struct DagostinoPearson {
    double k2 = 0.0;
    double z_skew = 0.0;
    double z_kurtosis = 0.0;
    double p_value = 1.0;
    bool reject = false;
};

/// K^2 = Z1(sqrt b1)^2 + Z2(b2)^2 with D'Agostino's skewness transform and
/// Anscombe-Glynn's kurtosis transform; moments are about the sample mean.
inline DagostinoPearson dagostino_pearson(std::span<const double> sample) {
    const std::size_t count = sample.size();
    if (count < 20) {
        throw DegenerateInputError("dagostino_pearson needs n >= 20, got " + std::to_string(count));
    }
    const double n = static_cast<double>(count);
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(sample[i])) {
            throw ValidationError("dagostino_pearson: non-finite value at index " + std::to_string(i));
        }
        mean += sample[i];
    }
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : sample) {
        const double dx = x - mean;
        const double dx2 = dx * dx;
        m2 += dx2;
        m3 += dx2 * dx;
        m4 += dx2 * dx2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) throw DegenerateInputError("dagostino_pearson: sample has zero variance");

    DagostinoPearson out;

    const double skew = m3 / std::pow(m2, 1.5);
    {
        const double y = skew * std::sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)));
        const double beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) /
                             ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
        const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
        const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
        const double alpha = std::sqrt(2.0 / (w2 - 1.0));
        out.z_skew = delta * std::asinh(y / alpha);
    }

    const double kurt = m4 / (m2 * m2);
    {
        const double e = 3.0 * (n - 1.0) / (n + 1.0);
        const double var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
        const double x = (kurt - e) / std::sqrt(var);
        const double sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0)) *
                                  std::sqrt(6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0)));
        const double a = 6.0 + 8.0 / sqrt_beta1 *
                                   (2.0 / sqrt_beta1 + std::sqrt(1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)));
        const double term1 = 1.0 - 2.0 / (9.0 * a);
        const double denom = 1.0 + x * std::sqrt(2.0 / (a - 4.0));
        if (denom == 0.0) throw NumericalError("dagostino_pearson: kurtosis transform undefined");
        const double term2 = std::copysign(std::cbrt((1.0 - 2.0 / a) / std::abs(denom)), denom);
        out.z_kurtosis = (term1 - term2) / std::sqrt(2.0 / (9.0 * a));
    }

    out.k2 = out.z_skew * out.z_skew + out.z_kurtosis * out.z_kurtosis;
    out.p_value = std::exp(-0.5 * out.k2);  // chi-squared(2) survival function
    out.reject = out.k2 > kChi2Df2Critical5;
    return out;
}

struct CoordinateNormality {
    std::size_t coordinate = 0;
    double ad_a2 = 0.0;
    double ad_p_value = 1.0;
    bool ad_reject = false;
    double dp_k2 = 0.0;
    double dp_z_skew = 0.0;
    double dp_z_kurtosis = 0.0;
    double dp_p_value = 1.0;
    bool dp_reject = false;
};

struct NormalityReport {
    std::vector<CoordinateNormality> per_coordinate;
    /// Share of non-rejecting decisions over both tests and all coordinates.
    double pass_fraction = 0.0;
    double alpha = kAlpha;
    std::size_t m = 0;
    std::size_t m_requested = 0;
    std::size_t n_fit = 0;
    std::size_t n_holdout = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

inline double pass_fraction(std::span<const CoordinateNormality> coords) noexcept {
    if (coords.empty()) return 0.0;
    std::size_t pass = 0;
    for (const auto& c : coords) pass += (!c.ad_reject) + (!c.dp_reject);
    return static_cast<double>(pass) / static_cast<double>(2 * coords.size());
}

namespace detail {

/// Fisher-Yates with an explicit index draw so permutations reproduce across
/// standard libraries.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    NormalSource rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
    return idx;
}

} // namespace detail

/// Fits whitening on a seeded random (1 - holdout_fraction) share of `rep`,
/// whitens the held-out rows and tests every retained coordinate.
inline NormalityReport validate_whitening(const EmbeddingMatrix& rep, std::size_t m, double holdout_fraction,
                                          std::uint64_t seed = 0) {
    if (rep.rows() < 100) {
        throw DegenerateInputError("validate_whitening needs at least 100 rows, got " +
                                   std::to_string(rep.rows()));
    }
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ValidationError("holdout_fraction must be in (0, 1), got " + std::to_string(holdout_fraction));
    }
    const std::size_t n = rep.rows();
    const auto n_holdout = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
    if (n_holdout < 20 || n - n_holdout < 2) {
        throw DegenerateInputError("split of " + std::to_string(n) + " rows at holdout_fraction " +
                                   std::to_string(holdout_fraction) +
                                   " leaves too few rows (holdout needs >= 20, fit >= 2)");
    }
    std::vector<std::size_t> perm = detail::seeded_permutation(n, substream_seed(seed, 3));
    std::vector<std::size_t> fit_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_holdout), perm.end());
    std::vector<std::size_t> hold_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_holdout));
    std::sort(fit_rows.begin(), fit_rows.end());
    std::sort(hold_rows.begin(), hold_rows.end());

    const EmbeddingMatrix fit = rep.select(fit_rows);
    const EmbeddingMatrix hold = rep.select(hold_rows);
    const linalg::WhiteningModel model = linalg::fit_whitening(fit, m);
    const linalg::RowMatrix y = linalg::whiten_batch(model, hold);

    NormalityReport report;
    report.m = model.m;
    report.m_requested = model.m_requested;
    report.n_fit = fit.rows();
    report.n_holdout = hold.rows();
    report.seed = seed;
    report.warnings = model.warnings;
    std::vector<double> column(hold.rows());
    for (std::size_t c = 0; c < model.m; ++c) {
        for (std::size_t i = 0; i < hold.rows(); ++i) {
            column[i] = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        }
        const auto ad = anderson_darling(column);
        const auto dp = dagostino_pearson(column);
        for (const auto& w : ad.warnings) report.warnings.push_back("coordinate " + std::to_string(c) + ": " + w);
        report.per_coordinate.push_back(
            {c, ad.a2, ad.p_value, ad.reject, dp.k2, dp.z_skew, dp.z_kurtosis, dp.p_value, dp.reject});
    }
    report.pass_fraction = pass_fraction(report.per_coordinate);
    return report;
}

} // namespace clide::stats
