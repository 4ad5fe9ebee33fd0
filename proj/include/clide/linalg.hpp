#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "clide/detail/kernels.hpp"
#include "clide/embedding.hpp"
#include "clide/error.hpp"

namespace clide::linalg {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Relative eigenvalue floor: eigenvalues at or below
/// max(kEigenFloorRelative * lambda_max, kEigenFloorAbsolute) are not retained.
inline constexpr double kEigenFloorRelative = 1e-10;
inline constexpr double kEigenFloorAbsolute = 1e-300;

inline constexpr double kJacobiTolerance = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;

inline double eigen_floor(double lambda_max) noexcept {
    return std::max(kEigenFloorRelative * lambda_max, kEigenFloorAbsolute);
}

/// Mean and population covariance (1/N normalization) of a sample.
struct CovarianceModel {
    Vector mu;
    Matrix sigma;
    std::size_t n_samples = 0;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mu.size()); }
};

namespace detail {

inline constexpr std::size_t kCovarianceBlock = 256;

// Accumulates X^T X over row blocks into the lower triangle, then mirrors.
// Row order fixes the summation order, so results are reproducible.
template <typename RowAt>
Matrix accumulate_scatter(std::size_t n, std::size_t d, const Vector& mu, RowAt&& row_at) {
    Matrix s = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    RowMatrix block;
    for (std::size_t start = 0; start < n; start += kCovarianceBlock) {
        const std::size_t count = std::min(kCovarianceBlock, n - start);
        block.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < count; ++i) {
            auto r = row_at(start + i);
            for (std::size_t j = 0; j < d; ++j) {
                block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    static_cast<double>(r[j]) - mu[static_cast<Eigen::Index>(j)];
            }
        }
        s.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
    }
    s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
    return s;
}

template <typename RowAt>
CovarianceModel covariance_of(std::size_t n, std::size_t d, RowAt&& row_at) {
    if (n < 2) {
        throw DegenerateInputError("covariance needs at least 2 samples, got " + std::to_string(n));
    }
    Vector mu = Vector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        auto r = row_at(i);
        for (std::size_t j = 0; j < d; ++j) mu[static_cast<Eigen::Index>(j)] += static_cast<double>(r[j]);
    }
    mu /= static_cast<double>(n);
    Matrix sigma = accumulate_scatter(n, d, mu, row_at);
    sigma /= static_cast<double>(n);
    return {std::move(mu), std::move(sigma), n};
}

} // namespace detail

/// mu = row mean; sigma = (1/N) sum (x_i - mu)(x_i - mu)^T.
inline CovarianceModel estimate_covariance(const EmbeddingMatrix& x) {
    return detail::covariance_of(x.rows(), x.dim(), [&](std::size_t i) { return x.row(i); });
}

/// Covariance of a subset of rows, taken in the order given.
inline CovarianceModel estimate_covariance(const EmbeddingMatrix& x,
                                           std::span<const std::size_t> rows) {
    return detail::covariance_of(rows.size(), x.dim(),
                                 [&](std::size_t i) { return x.row(rows[i]); });
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending, eigenvectors as
/// orthonormal columns. Each eigenvector's first component with magnitude
/// above 1e-12 is positive.
struct EigenDecomposition {
    Vector values;
    Matrix vectors;
    int sweeps = 0;
};

inline void check_symmetric(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw ValidationError("matrix is not square (" + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + ")");
    }
    if (!a.allFinite()) throw ValidationError("matrix has non-finite entries");
    const double scale = a.cwiseAbs().maxCoeff();
    const Eigen::Index n = a.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (std::abs(a(i, j) - a(j, i)) > 1e-12 * scale) {
                throw ValidationError("matrix is not symmetric: |a(" + std::to_string(i) + "," +
                                      std::to_string(j) + ") - a(" + std::to_string(j) + "," +
                                      std::to_string(i) + ")| exceeds 1e-12 relative");
            }
        }
    }
}

/// Flips eigenvector signs so the first non-negligible component is positive.
inline void canonicalize_signs(Matrix& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
            const double v = vectors(r, c);
            if (std::abs(v) > 1e-12) {
                if (v < 0) vectors.col(c) = -vectors.col(c);
                break;
            }
        }
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps visit (p, q) pairs in row-major order p < q. Iteration stops when
/// the off-diagonal Frobenius norm is at most 1e-12 * ||A||_F; more than 100
/// sweeps is a NumericalError. Eigenvalues are then sorted descending with a
/// stable sort, so exact ties keep their sweep order.
inline EigenDecomposition eigh_descending(const Matrix& sigma) {
    check_symmetric(sigma);
    const std::size_t n = static_cast<std::size_t>(sigma.rows());

    // Row-major working copy: rotations update two contiguous rows and mirror
    // them into the columns. vt holds eigenvectors as rows.
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a[i * n + j] = 0.5 * (sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
                                  sigma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
    std::vector<double> vt(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) vt[i * n + i] = 1.0;

    double frob2 = 0.0;
    for (double v : a) frob2 += v * v;
    const double tol = kJacobiTolerance * std::sqrt(frob2);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
        return std::sqrt(2.0 * s);
    };

    int sweep = 0;
    for (;; ++sweep) {
        if (off_norm() <= tol) break;
        if (sweep >= kJacobiMaxSweeps) {
            throw NumericalError("Jacobi eigensolver did not converge within " +
                                 std::to_string(kJacobiMaxSweeps) + " sweeps (n=" +
                                 std::to_string(n) + ")");
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                double t;
                if (std::abs(tau) > 1e150) {
                    t = 0.5 / tau;
                } else {
                    t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                }
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                double* rp = &a[p * n];
                double* rq = &a[q * n];
                for (std::size_t k = 0; k < n; ++k) {
                    const double xp = rp[k];
                    const double xq = rq[k];
                    rp[k] = c * xp - s * xq;
                    rq[k] = s * xp + c * xq;
                }
                rp[p] = app - t * apq;
                rq[q] = aqq + t * apq;
                rp[q] = 0.0;
                rq[p] = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    a[k * n + p] = rp[k];
                    a[k * n + q] = rq[k];
                }

                double* vp = &vt[p * n];
                double* vq = &vt[q * n];
                for (std::size_t k = 0; k < n; ++k) {
                    const double xp = vp[k];
                    const double xq = vq[k];
                    vp[k] = c * xp - s * xq;
                    vq[k] = s * xp + c * xq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });

    EigenDecomposition out;
    out.values.resize(static_cast<Eigen::Index>(n));
    out.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t c = 0; c < n; ++c) {
        const std::size_t src = order[c];
        out.values[static_cast<Eigen::Index>(c)] = a[src * n + src];
        for (std::size_t r = 0; r < n; ++r) {
            out.vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vt[src * n + r];
        }
    }
    canonicalize_signs(out.vectors);
    out.sweeps = sweep;
    return out;
}

/// Truncated whitening map x -> W (x - mu), W = Lambda^{-1/2} V^T restricted to
/// the top-m eigenpairs above the eigenvalue floor.
///
/// Invariants: eigenvalues descending and above the floor;
/// m <= m_requested <= d; W Sigma W^T = I_m for the source covariance.
struct WhiteningModel {
    Vector mu;
    RowMatrix w;          // m x d, row j = lambda_j^{-1/2} v_j^T
    Vector eigenvalues;   // length m
    std::size_t m = 0;
    std::size_t m_requested = 0;
    std::vector<std::string> warnings;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mu.size()); }
};

inline WhiteningModel build_whitening(const CovarianceModel& cov, std::size_t m_requested) {
    const std::size_t d = cov.dim();
    if (m_requested < 1 || m_requested > d) {
        throw ValidationError("m_requested must be in [1, d=" + std::to_string(d) + "], got " +
                              std::to_string(m_requested));
    }
    const EigenDecomposition eig = eigh_descending(cov.sigma);
    const double lambda_max = eig.values[0];
    const double floor = eigen_floor(lambda_max);
    std::size_t usable = 0;
    while (usable < d && eig.values[static_cast<Eigen::Index>(usable)] > floor) ++usable;
    if (usable == 0) {
        throw DegenerateInputError("representative subset has no usable variance (lambda_max = " +
                                   std::to_string(lambda_max) + ")");
    }

    WhiteningModel model;
    model.m_requested = m_requested;
    model.m = std::min(m_requested, usable);
    model.mu = cov.mu;
    const auto m = static_cast<Eigen::Index>(model.m);
    model.eigenvalues = eig.values.head(m);
    model.w.resize(m, static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < m; ++j) {
        model.w.row(j) = eig.vectors.col(j).transpose() / std::sqrt(model.eigenvalues[j]);
    }
    if (model.m < m_requested) {
        model.warnings.push_back("whitening truncated to m=" + std::to_string(model.m) +
                                 " (requested " + std::to_string(m_requested) +
                                 "): remaining eigenvalues are below the floor " +
                                 std::to_string(floor));
    }
    return model;
}

inline WhiteningModel fit_whitening(const EmbeddingMatrix& x, std::size_t m_requested) {
    return build_whitening(estimate_covariance(x), m_requested);
}

template <std::floating_point T>
void check_dim(const WhiteningModel& model, std::span<const T> x) {
    if (x.size() != model.dim()) {
        throw ValidationError("dimension mismatch: model d=" + std::to_string(model.dim()) +
                              ", vector d=" + std::to_string(x.size()));
    }
}

/// y = W (x - mu), length m.
template <std::floating_point T>
Vector whiten(const WhiteningModel& model, std::span<const T> x) {
    check_dim(model, x);
    const std::size_t d = model.dim();
    std::vector<double> centered(d);
    for (std::size_t j = 0; j < d; ++j) {
        centered[j] = static_cast<double>(x[j]) - model.mu[static_cast<Eigen::Index>(j)];
    }
    Vector y(static_cast<Eigen::Index>(model.m));
    for (std::size_t r = 0; r < model.m; ++r) {
        y[static_cast<Eigen::Index>(r)] =
            clide::detail::dot_lanes(model.w.row(static_cast<Eigen::Index>(r)).data(), centered.data(), d);
    }
    return y;
}

inline Vector whiten(const WhiteningModel& model, const EmbeddingVector& x) {
    return whiten(model, x.values());
}

/// Whitens every row; row i is bit-identical to whiten(model, x.row(i)).
/// Queries are processed in tiles so each row of W is reused from cache.
inline RowMatrix whiten_batch(const WhiteningModel& model, const EmbeddingMatrix& x,
                              std::size_t first = 0, std::size_t count = static_cast<std::size_t>(-1)) {
    check_dim(model, x.row(0));
    count = std::min(count, x.rows() - first);
    const std::size_t d = model.dim();
    constexpr std::size_t kTile = 16;
    RowMatrix y(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(model.m));
    std::vector<double> centered(kTile * d);
    for (std::size_t t0 = 0; t0 < count; t0 += kTile) {
        const std::size_t tn = std::min(kTile, count - t0);
        for (std::size_t q = 0; q < tn; ++q) {
            auto r = x.row(first + t0 + q);
            for (std::size_t j = 0; j < d; ++j) {
                centered[q * d + j] = static_cast<double>(r[j]) - model.mu[static_cast<Eigen::Index>(j)];
            }
        }
        for (std::size_t row = 0; row < model.m; ++row) {
            const double* wr = model.w.row(static_cast<Eigen::Index>(row)).data();
            for (std::size_t q = 0; q < tn; ++q) {
                y(static_cast<Eigen::Index>(t0 + q), static_cast<Eigen::Index>(row)) =
                    clide::detail::dot_lanes(wr, &centered[q * d], d);
            }
        }
    }
    return y;
}

} // namespace clide::linalg
