#pragma once

// Squared whitened norm ||W(X_k, m) x_hat||^2 of a query against a sample,
// evaluated without materializing W.
//
// With centered sample rows C (k x d) and Sigma = C^T C / k, the quantity is
// sum over the top-m eigenpairs (lambda_j, v_j) of Sigma of (v_j . x_hat)^2 / lambda_j.
// The eigen-system comes from a Householder tridiagonalization followed by
// implicit QL; instead of accumulating eigenvectors, the QL rotations are
// applied to the single projected query vector, so after the reduction the
// cost is O(n^2) rather than O(n^3).
//
// When k <= d the k x k Gram matrix S = C C^T / k is used instead. It has the
// same nonzero eigenvalues, and with S u_j = lambda_j u_j and g = C x_hat,
// (v_j . x_hat)^2 / lambda_j = (u_j . g)^2 / (k lambda_j^2).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "clide/error.hpp"
#include "clide/linalg.hpp"

namespace clide::linalg {

struct SpectralNorm {
    double squared_norm = 0.0;
    std::size_t m_used = 0;     // eigenpairs summed
    std::size_t usable = 0;     // eigenvalues above the floor
    double lambda_max = 0.0;
};

namespace detail {

// std::hypot is slow in common libms; only fall back to it when the plain
// form over- or underflows.
inline double fast_hypot(double a, double b) noexcept {
    const double r = std::sqrt(a * a + b * b);
    return (std::isfinite(r) && r > 1e-150) ? r : std::hypot(a, b);
}

// Implicit-shift QL on a symmetric tridiagonal matrix (diag, sub), after the
// EISPACK tql2 procedure. `proj` enters as the vector to project and leaves
// holding its coordinates in the eigenbasis; `diag` leaves holding the
// eigenvalues (unsorted, aligned with proj).
inline void tridiagonal_ql_project(std::vector<double>& diag, std::vector<double> sub,
                                   std::vector<double>& proj) {
    const std::size_t n = diag.size();
    if (n == 0) return;
    sub.resize(n, 0.0);
    sub[n - 1] = 0.0;
    constexpr double eps = 0x1.0p-52;
    constexpr int kMaxIterations = 60;
    double f = 0.0;
    double tst1 = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(diag[l]) + std::abs(sub[l]));
        std::size_t m = l;
        while (m < n) {
            if (std::abs(sub[m]) <= eps * tst1) break;
            ++m;
        }
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > kMaxIterations) {
                    throw NumericalError("tridiagonal QL did not converge for eigenvalue " +
                                         std::to_string(l) + " of " + std::to_string(n));
                }
                double g = diag[l];
                double p = (diag[l + 1] - g) / (2.0 * sub[l]);
                double r = fast_hypot(p, 1.0);
                if (p < 0) r = -r;
                diag[l] = sub[l] / (p + r);
                diag[l + 1] = sub[l] * (p + r);
                const double dl1 = diag[l + 1];
                double h = g - diag[l];
                for (std::size_t i = l + 2; i < n; ++i) diag[i] -= h;
                f += h;

                p = diag[m];
                double c = 1.0, c2 = 1.0, c3 = 1.0;
                const double el1 = sub[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t ii = m; ii-- > l;) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * sub[ii];
                    h = c * p;
                    r = fast_hypot(p, sub[ii]);
                    sub[ii + 1] = s * r;
                    s = sub[ii] / r;
                    c = p / r;
                    p = c * diag[ii] - s * g;
                    diag[ii + 1] = h + s * (c * g + s * diag[ii]);
                    const double t = proj[ii + 1];
                    proj[ii + 1] = s * proj[ii] + c * t;
                    proj[ii] = c * proj[ii] - s * t;
                }
                p = -s * s2 * c3 * el1 * sub[l] / dl1;
                sub[l] = s * p;
                diag[l] = c * p;
            } while (std::abs(sub[l]) > eps * tst1);
        }
        diag[l] += f;
        sub[l] = 0.0;
    }
}

// Eigenvalues of the symmetric matrix s (lower triangle referenced) and the
// coordinates of vector v in its eigenbasis.
inline void eigen_project(const Matrix& s, const Vector& v, std::vector<double>& values,
                          std::vector<double>& coords) {
    const Eigen::Index n = s.rows();
    if (n == 1) {
        values.assign(1, s(0, 0));
        coords.assign(1, v[0]);
        return;
    }
    Eigen::Tridiagonalization<Matrix> tri(s);
    Vector h = tri.matrixQ().adjoint() * v;
    // diagonal()/subDiagonal() are strided views into the packed matrix.
    const Vector diag = tri.diagonal();
    const Vector subdiag = tri.subDiagonal();
    values.assign(diag.data(), diag.data() + n);
    std::vector<double> sub(subdiag.data(), subdiag.data() + (n - 1));
    coords.assign(h.data(), h.data() + n);
    tridiagonal_ql_project(values, std::move(sub), coords);
}

} // namespace detail

/// `centered` holds the k sample rows minus their mean; `x_hat` the query minus
/// the same mean. Eigenvalues at or below the floor are dropped, then the top
/// min(m_target, usable) are summed in descending eigenvalue order.
inline SpectralNorm spectral_squared_norm(const RowMatrix& centered, const Vector& x_hat,
                                          std::size_t m_target) {
    const auto k = centered.rows();
    const auto d = centered.cols();
    if (k < 2) throw DegenerateInputError("spectral norm needs at least 2 samples");
    if (x_hat.size() != d) throw ValidationError("spectral norm: query dimension mismatch");

    const bool gram = k <= d;
    const Eigen::Index n = gram ? k : d;
    Matrix s = Matrix::Zero(n, n);
    Vector v;
    if (gram) {
        s.selfadjointView<Eigen::Lower>().rankUpdate(centered);
        v = centered * x_hat;
    } else {
        s.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
        v = x_hat;
    }
    s /= static_cast<double>(k);

    std::vector<double> values, coords;
    detail::eigen_project(s, v, values, coords);

    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

    SpectralNorm out;
    out.lambda_max = values[order[0]];
    const double floor = eigen_floor(out.lambda_max);
    while (out.usable < order.size() && values[order[out.usable]] > floor) ++out.usable;
    out.m_used = std::min(m_target, out.usable);
    const double kd = static_cast<double>(k);
    for (std::size_t j = 0; j < out.m_used; ++j) {
        const double lambda = values[order[j]];
        const double p = coords[order[j]];
        out.squared_norm += gram ? (p * p) / (kd * lambda * lambda) : (p * p) / lambda;
    }
    return out;
}

} // namespace clide::linalg
