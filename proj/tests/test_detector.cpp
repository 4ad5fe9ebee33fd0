#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clide/detector.hpp"
#include "clide/synth.hpp"
#include "test_util.hpp"

using namespace clide;

namespace {

DetectorConfig cfg(std::size_t k, std::size_t m, WhiteningMode mode = WhiteningMode::local) {
    DetectorConfig c;
    c.k = k;
    c.m = m;
    c.mode = mode;
    return c;
}

void expect_same(const ScoreRecord& a, const ScoreRecord& b) {
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.log_likelihood, b.log_likelihood);
    EXPECT_EQ(a.criterion, b.criterion);
    EXPECT_EQ(a.m_used, b.m_used);
    EXPECT_EQ(a.k_used, b.k_used);
    EXPECT_EQ(a.neighbor_truncated, b.neighbor_truncated);
}

ScoreRecord rec(double criterion, std::size_t m = 3) {
    return {"r", -criterion, criterion, m, 10, false};
}

const synth::DomainSpec kDomain = synth::DomainSpec::make(16, 4, 21);

} // namespace

TEST(DetectorConfig, DefaultsAndDerivedK) {
    DetectorConfig c;
    EXPECT_EQ(c.k, 500u);
    EXPECT_EQ(c.m, 400u);
    EXPECT_EQ(c.mode, WhiteningMode::local);
    EXPECT_EQ(DetectorConfig::with_derived_k(400).k, 500u);
    EXPECT_EQ(DetectorConfig::with_derived_k(64).k, 164u);
}

TEST(DetectorConfig, Validation) {
    EXPECT_THROW(cfg(1, 1).validate(), ValidationError);
    EXPECT_THROW(cfg(5, 0).validate(), ValidationError);
    EXPECT_THROW(cfg(5, 5).validate(), ValidationError);
    EXPECT_NO_THROW(cfg(5, 4).validate());
    EXPECT_EQ(parse_mode("global"), WhiteningMode::global);
    EXPECT_THROW(parse_mode("both"), ValidationError);
}

TEST(Detector, TooFewRepresentativeRows) {
    const auto rep = clide::testing::gaussian_matrix(4, 8, 1);
    EXPECT_THROW(Detector(rep, cfg(10, 4)), DegenerateInputError);
    EXPECT_NO_THROW(Detector(rep, cfg(10, 3)));
}

TEST(Detector, KClampedOrStrict) {
    const auto rep = clide::testing::gaussian_matrix(30, 4, 2);
    Detector det(rep, cfg(50, 3));
    EXPECT_EQ(det.k_effective(), 30u);
    EXPECT_FALSE(det.warnings().empty());
    const auto r = det.score(rep.row(0));
    EXPECT_TRUE(r.neighbor_truncated);
    EXPECT_EQ(r.k_used, 30u);
    auto strict = cfg(50, 3);
    strict.strict = true;
    EXPECT_THROW(Detector(rep, strict), ValidationError);
}

TEST(Detector, MClampedToDimension) {
    const auto rep = clide::testing::gaussian_matrix(300, 8, 3);
    Detector det(rep, cfg(200, 100));
    EXPECT_EQ(det.m_target(), 8u);
    EXPECT_EQ(det.score(rep.row(0)).m_used, 8u);
}

TEST(Detector, LocalAtFullSetEqualsGlobal) {
    const auto rep = synth::generate_domain(kDomain, 120);
    const auto queries = synth::generate_offset_queries(kDomain, 30, 1.0);
    Detector local(rep, cfg(120, 16));
    Detector global(rep, cfg(120, 16, WhiteningMode::global));
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        expect_same(local.score(queries.row(i)), global.score(queries.row(i)));
    }
}

TEST(Detector, LocalFullSetMatchesSubsetComputation) {
    // k = n - 1 exercises the per-query route; compare with an explicit model
    // fitted on the selected neighbors.
    const auto rep = synth::generate_domain(kDomain, 60);
    const auto q = synth::generate_offset_queries(kDomain, 5, 2.0);
    Detector det(rep, cfg(59, 16));
    for (std::size_t i = 0; i < q.rows(); ++i) {
        const auto nb = top_k(rep, q.row(i), 59);
        const auto model = linalg::fit_whitening(rep.select(nb.indices), 16);
        const auto ref = conditional_log_likelihood(model, q.row(i));
        const auto r = det.score(q.row(i));
        EXPECT_EQ(r.m_used, ref.m);
        EXPECT_NEAR(r.log_likelihood, ref.log_likelihood, 1e-8 * std::abs(ref.log_likelihood));
        EXPECT_EQ(r.criterion, -r.log_likelihood);
    }
}

TEST(Detector, IdenticalQueriesIdenticalRecords) {
    const auto rep = synth::generate_domain(kDomain, 200);
    Detector det(rep, cfg(50, 10));
    const auto q = synth::generate_domain(synth::DomainSpec::make(16, 4, 99), 1);
    expect_same(det.score(q.row(0), "a"), det.score(q.row(0), "a"));
}

TEST(Detector, BatchMatchesLoopAndIsOrderIndependent) {
    const auto rep = synth::generate_domain(kDomain, 300);
    const auto queries = synth::generate_offset_queries(kDomain, 1000, 1.5);
    for (auto mode : {WhiteningMode::local, WhiteningMode::global}) {
        Detector det(rep, cfg(40, 12, mode));
        const auto batch = det.score_batch(queries);
        ASSERT_EQ(batch.records.size(), 1000u);
        for (std::size_t i = 0; i < 1000; ++i) expect_same(batch.records[i], det.score(queries.row(i), queries.id(i)));

        BatchOptions threaded;
        threaded.threads = 3;
        const auto par = det.score_batch(queries, threaded);
        for (std::size_t i = 0; i < 1000; ++i) expect_same(par.records[i], batch.records[i]);

        std::vector<std::size_t> perm(1000);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::reverse(perm.begin(), perm.end());
        std::rotate(perm.begin(), perm.begin() + 123, perm.end());
        const auto permuted = det.score_batch(queries.select(perm));
        for (std::size_t i = 0; i < 1000; ++i) {
            EXPECT_EQ(permuted.records[i].log_likelihood, batch.records[perm[i]].log_likelihood);
        }

        const auto single = det.score_batch(queries.slice(7, 1));
        ASSERT_EQ(single.records.size(), 1u);
        EXPECT_EQ(single.records[0].log_likelihood, batch.records[7].log_likelihood);
    }
}

TEST(Detector, BatchErrorsCarryRowAttribution) {
    const auto rep = synth::generate_domain(kDomain, 100);
    std::vector<double> qv(16 * 4, 0.5);
    std::fill(qv.begin() + 32, qv.begin() + 48, 0.0);  // row 2 has zero norm
    const auto queries = EmbeddingMatrix::from_values(4, 16, std::span<const double>(qv), {"a", "b", "c", "d"});
    Detector det(rep, cfg(30, 8));
    try {
        det.score_batch(queries);
        FAIL();
    } catch (const DegenerateInputError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2 (id c)"), std::string::npos) << e.what();
    }
    BatchOptions skip;
    skip.skip_errors = true;
    skip.threads = 2;
    const auto r = det.score_batch(queries, skip);
    ASSERT_EQ(r.records.size(), 3u);
    EXPECT_EQ(r.records[2].id, "d");
    ASSERT_EQ(r.failures.size(), 1u);
    EXPECT_EQ(r.failures[0].row, 2u);
    EXPECT_EQ(r.failures[0].kind, "DegenerateInputError");
}

TEST(Detector, DegenerateNeighborhoodIsNumericalError) {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 10; ++i) rows.push_back({1, 0, 0});
    for (int i = 0; i < 10; ++i) rows.push_back({0, 1 + 0.1 * i, 0.3 * i});
    const auto rep = EmbeddingMatrix::from_rows(rows);
    Detector det(rep, cfg(10, 2));
    try {
        det.score(std::span<const double>(std::vector<double>{1, 0, 0}));
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("neighbor rows"), std::string::npos);
    }
}

TEST(Detector, RankDeficientNeighborhoodsMakeRunHeterogeneous) {
    // Rows near e1 span a plane; rows near e3 span all three axes.
    NormalSource rng(5);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 20; ++i) rows.push_back({5.0, rng.normal(), 0.0});
    for (int i = 0; i < 20; ++i) rows.push_back({0.3 * rng.normal(), 0.3 * rng.normal(), 5.0 + rng.normal()});
    const auto rep = EmbeddingMatrix::from_rows(rows);
    Detector det(rep, cfg(15, 3));
    const auto a = det.score(std::span<const double>(std::vector<double>{5, 0.1, 0}));
    const auto b = det.score(std::span<const double>(std::vector<double>{0, 0, 5}));
    EXPECT_EQ(a.m_used, 1u);
    EXPECT_EQ(b.m_used, 3u);
    const std::vector<ScoreRecord> run{a, b};
    EXPECT_THROW(calibrate(run), ValidationError);
}

TEST(Detector, FromSavedModel) {
    const auto rep = synth::generate_domain(kDomain, 200);
    const auto q = synth::generate_offset_queries(kDomain, 20, 1.0);
    Detector global(rep, cfg(200, 12, WhiteningMode::global));
    Detector saved(*global.global_model(), 200);
    for (std::size_t i = 0; i < q.rows(); ++i) expect_same(saved.score(q.row(i)), global.score(q.row(i)));
}

TEST(Detector, ScaleLeavesLabelsUnchanged) {
    const auto rep = synth::generate_domain(kDomain, 300);
    const auto q = synth::generate_offset_queries(kDomain, 50, 2.0);
    auto scaled = [](const EmbeddingMatrix& m, double c) {
        std::vector<double> v(m.values().begin(), m.values().end());
        for (auto& x : v) x *= c;
        return EmbeddingMatrix::from_values(m.rows(), m.dim(), std::span<const double>(v));
    };
    for (auto mode : {WhiteningMode::local, WhiteningMode::global}) {
        Detector base(rep, cfg(60, 16, mode));
        const auto real = base.score_batch(rep.slice(0, 100)).records;
        const auto cal = calibrate(real);
        const auto recs = base.score_batch(q).records;
        for (double c : {4.0, 0.25}) {  // powers of two keep float storage exact
            const auto rep_c = scaled(rep, c);
            Detector det(rep_c, cfg(60, 16, mode));
            const auto cal_c = calibrate(det.score_batch(rep_c.slice(0, 100)).records);
            const auto recs_c = det.score_batch(scaled(q, c)).records;
            for (std::size_t i = 0; i < recs.size(); ++i) {
                EXPECT_NEAR(recs_c[i].criterion, recs[i].criterion, 1e-8 * std::max(1.0, std::abs(recs[i].criterion)));
                EXPECT_EQ(classify(recs_c[i], cal_c), classify(recs[i], cal));
            }
        }
    }
}

TEST(Detector, OwnDomainScoresBelowForeignDomain) {
    const auto a = synth::DomainSpec::make(32, 8, 1);
    const auto b = synth::DomainSpec::make(32, 8, 2);
    const auto rep = synth::generate_domain(a, 600);
    const auto qa = synth::generate_domain(a, 800).slice(600, 200);
    const auto qb = synth::generate_domain(b, 200);
    Detector det(rep, cfg(150, 32));
    double ma = 0, mb = 0;
    for (const auto& r : det.score_batch(qa).records) ma += r.criterion;
    for (const auto& r : det.score_batch(qb).records) mb += r.criterion;
    EXPECT_LT(ma / 200, mb / 200);
}

TEST(Calibrate, Arithmetic) {
    const std::vector<ScoreRecord> r{rec(0), rec(1), rec(2)};
    const auto cal = calibrate(r);
    EXPECT_DOUBLE_EQ(cal.mean, 1.0);
    EXPECT_NEAR(cal.std, std::sqrt(2.0 / 3.0), 1e-15);
    EXPECT_NEAR(cal.threshold, 1.8164966, 1e-7);
    EXPECT_NEAR(cal.threshold, 1.0 + std::sqrt(2.0 / 3.0), 1e-12);
    EXPECT_EQ(cal.n, 3u);
    EXPECT_EQ(cal.direction, "higher_is_generated");
    EXPECT_EQ(cal.m, 3u);
    EXPECT_EQ(cal.k, 10u);
}

TEST(Calibrate, ConstantCriteria) {
    const double c = 123.456789;
    const std::vector<ScoreRecord> r{rec(c), rec(c), rec(c), rec(c), rec(c)};
    const auto cal = calibrate(r);
    EXPECT_EQ(cal.std, 0.0);
    EXPECT_EQ(cal.threshold, c);
}

TEST(Calibrate, Errors) {
    EXPECT_THROW(calibrate(std::vector<ScoreRecord>{rec(1)}), DegenerateInputError);
    EXPECT_THROW(calibrate(std::vector<ScoreRecord>{}), DegenerateInputError);
    EXPECT_THROW(calibrate(std::vector<ScoreRecord>{rec(1, 3), rec(2, 4)}), ValidationError);
}

TEST(Classify, BoundaryIsReal) {
    const std::vector<ScoreRecord> r{rec(0), rec(1), rec(2)};
    const auto cal = calibrate(r);
    EXPECT_EQ(classify(cal.threshold, cal), Label::real);
    EXPECT_EQ(classify(std::nextafter(cal.threshold, 1e300), cal), Label::generated);
    EXPECT_EQ(classify(rec(cal.threshold), cal), Label::real);
    EXPECT_THROW(classify(rec(0.0, 7), cal), ValidationError);
}

TEST(Classify, InDistributionMostlyReal) {
    const auto spec = synth::DomainSpec::make(16, 4, 30);
    const auto data = synth::generate_domain(spec, 3000);
    const auto rep = data.slice(0, 1000);
    Detector det(rep, cfg(1000, 16, WhiteningMode::global));
    const auto cal = calibrate(det.score_batch(data.slice(1000, 1000)).records);
    std::size_t real = 0;
    const auto test = det.score_batch(data.slice(2000, 1000)).records;
    for (const auto& r : test) real += classify(r, cal) == Label::real;
    // One-sided tail above mean + 1 sd is ~16% for a Gaussian criterion.
    EXPECT_GE(static_cast<double>(real) / 1000.0, 0.80);
}
