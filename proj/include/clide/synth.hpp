#pragma once

// Seeded low-rank Gaussian "domains": most variance lives in a random
// m_active-dimensional subspace, with a small isotropic residual elsewhere.
//
// Procedure (fixed so results reproduce across implementations):
//   basis    G = d x d standard normals from substream_seed(seed, 0), filled
//            row-major; columns orthonormalized left to right by modified
//            Gram-Schmidt, applied twice. Columns 0..m_active-1 span the
//            dominant subspace V, the rest span its complement U.
//   samples  one NormalSource on substream_seed(seed, 1); per row, m_active
//            normals z1 then d - m_active normals z2:
//              x = center + V diag(sqrt(spectrum)) z1 + sqrt(residual_sigma) U z2
//   offsets  a second NormalSource on substream_seed(seed, 2); per row,
//            d - m_active normals g giving the unit direction u = U g / |U g|;
//            x += offset_sigmas * sqrt(min(spectrum)) * u

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clide/embedding.hpp"
#include "clide/error.hpp"
#include "clide/linalg.hpp"
#include "clide/random.hpp"

namespace clide::synth {

struct DomainSpec {
    std::size_t d = 0;
    std::size_t m_active = 0;
    std::vector<double> spectrum;  // dominant variances, non-increasing
    double residual_sigma = 0.0;   // variance of each off-subspace direction
    std::vector<double> center;    // length d; empty means the origin
    std::uint64_t seed = 0;

    /// Geometric spectrum from `top` down to `bottom` over m_active values.
    static DomainSpec make(std::size_t d, std::size_t m_active, std::uint64_t seed, double top = 4.0,
                           double bottom = 1.0, double residual_sigma = 0.01) {
        DomainSpec s;
        s.d = d;
        s.m_active = m_active;
        s.seed = seed;
        s.residual_sigma = residual_sigma;
        s.spectrum.resize(m_active);
        for (std::size_t i = 0; i < m_active; ++i) {
            const double t = m_active > 1 ? static_cast<double>(i) / static_cast<double>(m_active - 1) : 0.0;
            s.spectrum[i] = top * std::pow(bottom / top, t);
        }
        return s;
    }

    double min_variance() const { return spectrum.empty() ? 0.0 : *std::min_element(spectrum.begin(), spectrum.end()); }

    void validate() const {
        if (d < 1) throw ValidationError("domain spec: d must be >= 1");
        if (m_active < 1 || m_active > d) {
            throw ValidationError("domain spec: m_active must be in [1, d], got " + std::to_string(m_active));
        }
        if (spectrum.size() != m_active) {
            throw ValidationError("domain spec: spectrum has " + std::to_string(spectrum.size()) +
                                  " values, expected m_active=" + std::to_string(m_active));
        }
        for (std::size_t i = 0; i < spectrum.size(); ++i) {
            if (!std::isfinite(spectrum[i]) || !(spectrum[i] > 0.0)) {
                throw ValidationError("domain spec: spectrum values must be finite and positive");
            }
            if (i > 0 && spectrum[i] > spectrum[i - 1]) {
                throw ValidationError("domain spec: spectrum must be descending");
            }
        }
        if (!std::isfinite(residual_sigma) || residual_sigma < 0.0 || !(residual_sigma < min_variance())) {
            throw ValidationError("domain spec: residual_sigma must be in [0, min(spectrum))");
        }
        if (!center.empty()) {
            if (center.size() != d) {
                throw ValidationError("domain spec: center has " + std::to_string(center.size()) +
                                      " values, expected d=" + std::to_string(d));
            }
            for (double c : center)
                if (!std::isfinite(c)) throw ValidationError("domain spec: center must be finite");
        }
    }
};

/// d x d orthonormal matrix; the first m_active columns are the dominant basis.
inline linalg::Matrix domain_basis(const DomainSpec& spec) {
    spec.validate();
    const auto d = static_cast<Eigen::Index>(spec.d);
    NormalSource rng(substream_seed(spec.seed, 0));
    linalg::Matrix q(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) q(i, j) = rng.normal();
    for (Eigen::Index j = 0; j < d; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index p = 0; p < j; ++p) {
                const double proj = q.col(p).dot(q.col(j));
                q.col(j) -= proj * q.col(p);
            }
        }
        const double norm = q.col(j).norm();
        if (!(norm > 1e-12)) throw NumericalError("domain basis: seeded matrix is numerically singular");
        q.col(j) /= norm;
    }
    return q;
}

namespace detail {

// Samples in double precision, row-major n x d.
inline linalg::RowMatrix sample_rows(const DomainSpec& spec, const linalg::Matrix& basis, std::size_t n) {
    const auto d = static_cast<Eigen::Index>(spec.d);
    const auto ma = static_cast<Eigen::Index>(spec.m_active);
    NormalSource rng(substream_seed(spec.seed, 1));
    linalg::RowMatrix x(static_cast<Eigen::Index>(n), d);
    linalg::Vector z1(ma), z2(d - ma);
    const double residual_sd = std::sqrt(spec.residual_sigma);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        for (Eigen::Index j = 0; j < ma; ++j) z1[j] = std::sqrt(spec.spectrum[static_cast<std::size_t>(j)]) * rng.normal();
        for (Eigen::Index j = 0; j < d - ma; ++j) z2[j] = residual_sd * rng.normal();
        linalg::Vector v = basis.leftCols(ma) * z1;
        if (d > ma) v += basis.rightCols(d - ma) * z2;
        if (!spec.center.empty()) v += Eigen::Map<const linalg::Vector>(spec.center.data(), d);
        x.row(i) = v.transpose();
    }
    return x;
}

inline EmbeddingMatrix to_embedding(const linalg::RowMatrix& x) {
    return EmbeddingMatrix::from_values(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols()),
                                        std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

} // namespace detail

/// n in-domain samples; a pure function of (spec, n).
inline EmbeddingMatrix generate_domain(const DomainSpec& spec, std::size_t n) {
    spec.validate();
    if (n < 1) throw ValidationError("generate_domain: n must be >= 1");
    return detail::to_embedding(detail::sample_rows(spec, domain_basis(spec), n));
}

struct OffsetQueries {
    EmbeddingMatrix queries;
    /// Row i is the displacement added to in-domain sample i (double precision).
    linalg::RowMatrix displacement;
};

/// In-domain samples (identical to generate_domain at the same spec and n)
/// pushed offset_sigmas * sqrt(min(spectrum)) along per-row seeded unit
/// directions in the complement of the dominant subspace.
inline OffsetQueries generate_offset_queries_detailed(const DomainSpec& spec, std::size_t n, double offset_sigmas) {
    spec.validate();
    if (n < 1) throw ValidationError("generate_offset_queries: n must be >= 1");
    if (!std::isfinite(offset_sigmas) || offset_sigmas < 0.0) {
        throw ValidationError("generate_offset_queries: offset_sigmas must be finite and >= 0");
    }
    const linalg::Matrix basis = domain_basis(spec);
    linalg::RowMatrix x = detail::sample_rows(spec, basis, n);
    const auto d = static_cast<Eigen::Index>(spec.d);
    const auto ma = static_cast<Eigen::Index>(spec.m_active);
    linalg::RowMatrix disp = linalg::RowMatrix::Zero(x.rows(), d);
    if (offset_sigmas > 0.0) {
        if (ma == d) {
            throw ValidationError("generate_offset_queries: m_active == d leaves no orthogonal direction");
        }
        const double magnitude = offset_sigmas * std::sqrt(spec.min_variance());
        NormalSource rng(substream_seed(spec.seed, 2));
        linalg::Vector g(d - ma);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < d - ma; ++j) g[j] = rng.normal();
            const linalg::Vector u = basis.rightCols(d - ma) * g;
            disp.row(i) = (magnitude / u.norm()) * u.transpose();
            x.row(i) += disp.row(i);
        }
    }
    return {detail::to_embedding(x), std::move(disp)};
}

inline EmbeddingMatrix generate_offset_queries(const DomainSpec& spec, std::size_t n, double offset_sigmas) {
    return generate_offset_queries_detailed(spec, n, offset_sigmas).queries;
}

} // namespace clide::synth
