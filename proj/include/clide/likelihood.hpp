#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "clide/detail/kernels.hpp"
#include "clide/embedding.hpp"
#include "clide/error.hpp"
#include "clide/linalg.hpp"

namespace clide {

/// ln(2 pi)
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

/// Gaussian log-density (nats) of a whitened vector in m dimensions.
/// Scores with different m are not comparable.
struct LikelihoodScore {
    double log_likelihood = 0.0;
    std::size_t m = 0;
    double squared_norm = 0.0;
};

inline LikelihoodScore score_from_squared_norm(double squared_norm, std::size_t m) noexcept {
    return {-0.5 * (static_cast<double>(m) * kLog2Pi + squared_norm), m, squared_norm};
}

/// l(y) = -1/2 (d ln 2pi + |y|^2) for a whitened vector y of length d.
template <std::floating_point T>
LikelihoodScore global_log_likelihood(std::span<const T> y) {
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (!std::isfinite(y[j])) {
            throw ValidationError("global_log_likelihood: non-finite value at index " +
                                  std::to_string(j));
        }
    }
    return score_from_squared_norm(detail::squared_norm_lanes(y.data(), y.size()), y.size());
}

inline LikelihoodScore global_log_likelihood(const linalg::Vector& y) {
    return global_log_likelihood(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

/// l(x | X, m) = -1/2 (m ln 2pi + |W(X, m)(x - mu)|^2). Evaluated as the
/// global formula on the whitened vector, so the two agree bit for bit when
/// the model keeps every dimension.
template <std::floating_point T>
LikelihoodScore conditional_log_likelihood(const linalg::WhiteningModel& model, std::span<const T> x) {
    return global_log_likelihood(linalg::whiten(model, x));
}

inline LikelihoodScore conditional_log_likelihood(const linalg::WhiteningModel& model,
                                                  const EmbeddingVector& x) {
    return conditional_log_likelihood(model, x.values());
}

/// Row-wise conditional likelihood; element i is bit-identical to
/// conditional_log_likelihood(model, x.row(first + i)).
inline std::vector<LikelihoodScore> conditional_log_likelihood_batch(
    const linalg::WhiteningModel& model, const EmbeddingMatrix& x, std::size_t first = 0,
    std::size_t count = static_cast<std::size_t>(-1)) {
    const linalg::RowMatrix y = linalg::whiten_batch(model, x, first, count);
    std::vector<LikelihoodScore> out;
    out.reserve(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        out.push_back(score_from_squared_norm(
            detail::squared_norm_lanes(y.row(i).data(), static_cast<std::size_t>(y.cols())),
            static_cast<std::size_t>(y.cols())));
    }
    return out;
}

} // namespace clide
