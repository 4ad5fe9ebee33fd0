#include <gtest/gtest.h>

#include <cmath>

#include "clide/linalg.hpp"
#include "clide/whtm.hpp"
#include "test_util.hpp"

using namespace clide;
using namespace clide::linalg;

namespace {

Matrix random_symmetric(Eigen::Index n, std::uint64_t seed) {
    NormalSource rng(seed);
    Matrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
    return a;
}

CovarianceModel diag_cov(std::initializer_list<double> diag) {
    CovarianceModel c;
    const auto d = static_cast<Eigen::Index>(diag.size());
    c.mu = Vector::Zero(d);
    c.sigma = Matrix::Zero(d, d);
    Eigen::Index i = 0;
    for (double v : diag) c.sigma(i, i) = v, ++i;
    c.n_samples = 10;
    return c;
}

// Full-rank correlated Gaussian sample.
EmbeddingMatrix correlated_sample(std::size_t n, std::size_t d, std::uint64_t seed) {
    const Matrix mix = random_symmetric(static_cast<Eigen::Index>(d), seed + 1000) +
                       3.0 * Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    NormalSource rng(seed);
    std::vector<double> v(n * d);
    Vector z(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : z) x = rng.normal();
        const Vector y = mix * z;
        for (std::size_t j = 0; j < d; ++j) v[i * d + j] = y[static_cast<Eigen::Index>(j)] + 0.5;
    }
    return EmbeddingMatrix::from_values(n, d, std::span<const double>(v));
}

} // namespace

TEST(Covariance, TwoPointSymmetricCase) {
    const auto x = EmbeddingMatrix::from_rows({{1, 0}, {-1, 0}});
    const auto c = estimate_covariance(x);
    EXPECT_EQ(c.n_samples, 2u);
    EXPECT_EQ(c.mu[0], 0.0);
    EXPECT_EQ(c.mu[1], 0.0);
    EXPECT_EQ(c.sigma(0, 0), 1.0);
    EXPECT_EQ(c.sigma(0, 1), 0.0);
    EXPECT_EQ(c.sigma(1, 0), 0.0);
    EXPECT_EQ(c.sigma(1, 1), 0.0);
}

TEST(Covariance, RepeatedRowHasZeroCovariance) {
    const auto x = EmbeddingMatrix::from_rows({{0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}});
    EXPECT_TRUE(estimate_covariance(x).sigma.isZero(0.0));
}

TEST(Covariance, NeedsTwoRows) {
    EXPECT_THROW(estimate_covariance(EmbeddingMatrix::from_rows({{1, 2}})), DegenerateInputError);
}

TEST(Covariance, PopulationNormalizationAndSymmetry) {
    const auto x = correlated_sample(300, 6, 4);
    const auto c = estimate_covariance(x);
    // Direct two-pass reference.
    Matrix ref = Matrix::Zero(6, 6);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        Vector r(6);
        for (int j = 0; j < 6; ++j) r[j] = static_cast<double>(x(i, static_cast<std::size_t>(j))) - c.mu[j];
        ref += r * r.transpose();
    }
    ref /= 300.0;
    EXPECT_LE((c.sigma - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
    EXPECT_EQ((c.sigma - c.sigma.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Covariance, SubsetMatchesSelectedMatrix) {
    const auto x = correlated_sample(50, 4, 5);
    std::vector<std::size_t> rows{3, 7, 11, 20, 41};
    const auto a = estimate_covariance(x, rows);
    const auto b = estimate_covariance(x.select(rows));
    EXPECT_EQ(a.sigma, b.sigma);
    EXPECT_EQ(a.mu, b.mu);
}

TEST(Jacobi, DiagonalInput) {
    Matrix a(2, 2);
    a << 1, 0, 0, 4;
    const auto e = eigh_descending(a);
    EXPECT_EQ(e.values[0], 4.0);
    EXPECT_EQ(e.values[1], 1.0);
    EXPECT_EQ(e.vectors(0, 0), 0.0);
    EXPECT_EQ(e.vectors(1, 0), 1.0);
    EXPECT_EQ(e.vectors(0, 1), 1.0);
    EXPECT_EQ(e.vectors(1, 1), 0.0);
}

TEST(Jacobi, Classic2x2WithSignConvention) {
    Matrix a(2, 2);
    a << 2, 1, 1, 2;
    const auto e = eigh_descending(a);
    EXPECT_NEAR(e.values[0], 3.0, 1e-14);
    EXPECT_NEAR(e.values[1], 1.0, 1e-14);
    const double h = std::sqrt(0.5);
    EXPECT_NEAR(e.vectors(0, 0), h, 1e-14);
    EXPECT_NEAR(e.vectors(1, 0), h, 1e-14);
    EXPECT_NEAR(e.vectors(0, 1), h, 1e-14);
    EXPECT_NEAR(e.vectors(1, 1), -h, 1e-14);
}

TEST(Jacobi, RandomSymmetricReconstruction) {
    const Matrix a = random_symmetric(10, 7);
    const auto e = eigh_descending(a);
    const Matrix rec = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    EXPECT_LE((rec - a).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Jacobi, Postconditions) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (Eigen::Index n : {1, 3, 17, 40}) {
            const Matrix a = random_symmetric(n, seed * 100 + static_cast<std::uint64_t>(n));
            const auto e = eigh_descending(a);
            const double lmax = e.values.cwiseAbs().maxCoeff();
            for (Eigen::Index j = 0; j < n; ++j) {
                EXPECT_LE((a * e.vectors.col(j) - e.values[j] * e.vectors.col(j)).norm(), 1e-8 * lmax);
                if (j > 0) EXPECT_GE(e.values[j - 1], e.values[j]);
                for (Eigen::Index r = 0; r < n; ++r) {
                    if (std::abs(e.vectors(r, j)) > 1e-12) {
                        EXPECT_GT(e.vectors(r, j), 0.0);
                        break;
                    }
                }
            }
            const Matrix gram = e.vectors.transpose() * e.vectors;
            EXPECT_LE((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
        }
    }
}

TEST(Jacobi, AgreesWithLibrarySolver) {
    const Matrix a = random_symmetric(30, 8);
    const auto e = eigh_descending(a);
    Eigen::SelfAdjointEigenSolver<Matrix> ref(a);
    for (Eigen::Index j = 0; j < 30; ++j) EXPECT_NEAR(e.values[j], ref.eigenvalues()[29 - j], 1e-12);
}

TEST(Jacobi, BitIdenticalReruns) {
    const Matrix a = random_symmetric(25, 9);
    const auto e1 = eigh_descending(a);
    const auto e2 = eigh_descending(a);
    EXPECT_EQ(e1.values, e2.values);
    EXPECT_EQ(e1.vectors, e2.vectors);
}

TEST(Jacobi, RejectsAsymmetricAndNonFinite) {
    Matrix a(2, 2);
    a << 1, 2, 2.001, 1;
    EXPECT_THROW(eigh_descending(a), ValidationError);
    Matrix b(2, 3);
    b.setZero();
    EXPECT_THROW(eigh_descending(b), ValidationError);
    Matrix c = Matrix::Identity(2, 2);
    c(0, 0) = std::nan("");
    EXPECT_THROW(eigh_descending(c), ValidationError);
}

TEST(Jacobi, ZeroMatrix) {
    const auto e = eigh_descending(Matrix::Zero(3, 3));
    EXPECT_TRUE(e.values.isZero(0.0));
    EXPECT_EQ(e.sweeps, 0);
}

TEST(Whitening, DiagonalCovariance) {
    const auto w = build_whitening(diag_cov({4, 1}), 2);
    ASSERT_EQ(w.m, 2u);
    EXPECT_EQ(w.w(0, 0), 0.5);
    EXPECT_EQ(w.w(0, 1), 0.0);
    EXPECT_EQ(w.w(1, 0), 0.0);
    EXPECT_EQ(w.w(1, 1), 1.0);
    EXPECT_TRUE(w.warnings.empty());
}

TEST(Whitening, RankDeficiencyTruncatesWithWarning) {
    const auto w = build_whitening(diag_cov({4, 0}), 2);
    EXPECT_EQ(w.m, 1u);
    EXPECT_EQ(w.m_requested, 2u);
    ASSERT_EQ(w.w.rows(), 1);
    EXPECT_EQ(w.w(0, 0), 0.5);
    EXPECT_EQ(w.w(0, 1), 0.0);
    EXPECT_EQ(w.warnings.size(), 1u);
}

TEST(Whitening, FloorIsRelativeToLargestEigenvalue) {
    EXPECT_EQ(build_whitening(diag_cov({1, 2e-10}), 2).m, 2u);
    EXPECT_EQ(build_whitening(diag_cov({1, 1e-10}), 2).m, 1u);
    EXPECT_EQ(build_whitening(diag_cov({1, 5e-11}), 2).m, 1u);
}

TEST(Whitening, Errors) {
    EXPECT_THROW(build_whitening(diag_cov({0, 0}), 1), DegenerateInputError);
    EXPECT_THROW(build_whitening(diag_cov({1, 1}), 0), ValidationError);
    EXPECT_THROW(build_whitening(diag_cov({1, 1}), 3), ValidationError);
}

TEST(Whitening, HandComputation) {
    WhiteningModel m = build_whitening(diag_cov({4, 1}), 2);
    const std::vector<double> x{2, 3};
    const Vector y = whiten(m, std::span<const double>(x));
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(y[1], 3.0);
    const Vector z = whiten(m, std::span<const double>(std::vector<double>{0, 0}));
    EXPECT_TRUE(z.isZero(0.0));
    EXPECT_THROW(whiten(m, std::span<const double>(std::vector<double>{1, 2, 3})), ValidationError);
}

TEST(Whitening, MeanMapsToZero) {
    const auto x = correlated_sample(200, 5, 6);
    const auto model = fit_whitening(x, 3);
    const Vector y = whiten(model, std::span<const double>(model.mu.data(), 5));
    EXPECT_EQ(y.size(), 3);
    EXPECT_TRUE(y.isZero(0.0));
}

TEST(Whitening, IdentityCovarianceOnSource) {
    const auto x = correlated_sample(1000, 2, 42);
    const auto cov = estimate_covariance(x);
    const auto model = build_whitening(cov, 2);
    const Matrix wsw = model.w * cov.sigma * model.w.transpose();
    EXPECT_LE((wsw - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Whitening, IsotropyOfWhitenedSource) {
    const auto x = correlated_sample(3000, 12, 10);
    const auto model = fit_whitening(x, 12);
    const RowMatrix y = whiten_batch(model, x);
    const Vector mean = y.colwise().mean();
    EXPECT_LE(mean.cwiseAbs().maxCoeff(), 1e-10);
    const RowMatrix yc = y.rowwise() - mean.transpose();
    const Matrix cov = (yc.transpose() * yc) / static_cast<double>(y.rows());
    const Matrix eye = Matrix::Identity(12, 12);
    EXPECT_LE((cov - eye).norm() / eye.norm(), 1e-8);
}

TEST(Whitening, TruncationMonotonicity) {
    const auto cov = estimate_covariance(correlated_sample(400, 8, 11));
    const auto full = build_whitening(cov, 8);
    for (std::size_t m1 = 1; m1 < 8; ++m1) {
        const auto part = build_whitening(cov, m1);
        EXPECT_EQ(part.w, full.w.topRows(static_cast<Eigen::Index>(m1)));
        EXPECT_EQ(part.eigenvalues, full.eigenvalues.head(static_cast<Eigen::Index>(m1)));
    }
}

TEST(Whitening, RowsAreOrthogonalWithInverseEigenvalueNorms) {
    const auto model = fit_whitening(correlated_sample(400, 8, 12), 8);
    const Matrix wwt = model.w * model.w.transpose();
    for (Eigen::Index i = 0; i < 8; ++i) {
        for (Eigen::Index j = 0; j < 8; ++j) {
            const double expect = i == j ? 1.0 / model.eigenvalues[i] : 0.0;
            EXPECT_NEAR(wwt(i, j), expect, 1e-10 * (1.0 / model.eigenvalues[7]));
        }
    }
}

TEST(Whitening, BatchIsBitIdenticalToSingle) {
    const auto x = correlated_sample(37, 9, 13);
    const auto model = fit_whitening(x, 6);
    const RowMatrix y = whiten_batch(model, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const Vector yi = whiten(model, x.row(i));
        for (Eigen::Index j = 0; j < 6; ++j) EXPECT_EQ(y(static_cast<Eigen::Index>(i), j), yi[j]);
    }
    const RowMatrix part = whiten_batch(model, x, 5, 20);
    EXPECT_EQ(part, y.middleRows(5, 20));
}

TEST(Whtm, RoundTripIsExact) {
    const auto model = fit_whitening(correlated_sample(100, 5, 14), 4);
    const auto bytes = encode_whtm(model);
    EXPECT_EQ(bytes.size(), 4u + 1u + 12u + 8u * (5 + 4 + 20));
    const auto back = decode_whtm(bytes);
    EXPECT_EQ(back.mu, model.mu);
    EXPECT_EQ(back.w, model.w);
    EXPECT_EQ(back.eigenvalues, model.eigenvalues);
    EXPECT_EQ(back.m, model.m);
    EXPECT_EQ(back.m_requested, model.m_requested);
    EXPECT_EQ(encode_whtm(back), bytes);
}

TEST(Whtm, RejectsMalformed) {
    const auto model = fit_whitening(correlated_sample(100, 3, 15), 2);
    auto bytes = encode_whtm(model);
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_whtm(bad), FormatError);
    bad = bytes;
    bad[4] = 9;
    EXPECT_THROW(decode_whtm(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    EXPECT_THROW(decode_whtm(bad), FormatError);
    bad = bytes;
    bad[9] = 7;  // m > m_requested
    EXPECT_THROW(decode_whtm(bad), FormatError);
}
