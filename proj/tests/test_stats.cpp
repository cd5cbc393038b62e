#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "pqos/align.hpp"
#include "pqos/stats.hpp"

using namespace pqos;
using pqos::testing::sample;

namespace {

template <typename Fn>
Errc code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return Errc::Empty;
}

}  // namespace

TEST(Acf, DegenerateInputs) {
    std::vector<double> flat(50, 3.0);
    EXPECT_EQ(code_of([&] { stats::acf(flat, 5); }), Errc::ZeroVariance);
    std::vector<double> shortv = {1, 2, 3};
    EXPECT_EQ(code_of([&] { stats::acf(shortv, 3); }), Errc::SeriesTooShort);
}

TEST(Acf, LagZeroIsOneAndValuesBounded) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    std::vector<double> x(500);
    for (auto& v : x) v = z(rng);
    auto a = stats::acf(x, 120);
    ASSERT_EQ(a.size(), 121u);
    EXPECT_DOUBLE_EQ(a[0], 1.0);
    for (double v : a) {
        EXPECT_LE(v, 1.0);
        EXPECT_GE(v, -1.0);
    }
}

TEST(Acf, Ar1MatchesAnalyticDecay) {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> z;
    const double phi = 0.8;
    std::vector<double> x(10000);
    x[0] = z(rng) / std::sqrt(1 - phi * phi);
    for (std::size_t i = 1; i < x.size(); ++i) x[i] = phi * x[i - 1] + z(rng);
    auto a = stats::acf(x, 10);
    for (std::size_t k = 0; k <= 10; ++k) EXPECT_NEAR(a[k], std::pow(phi, k), 0.05) << "lag " << k;
}

TEST(Acf, WhiteNoiseWithinBand) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z;
    const std::size_t n = 10000;
    std::vector<double> x(n);
    for (auto& v : x) v = z(rng);
    auto a = stats::acf(x, 40);
    int inside = 0;
    for (std::size_t k = 1; k <= 40; ++k) inside += std::abs(a[k]) < 3.0 / std::sqrt(static_cast<double>(n));
    EXPECT_GE(inside, 38);  // >= 95% of 40 lags
}

TEST(Acf, FirstCrossingInterpolates) {
    std::vector<double> a = {1.0, 0.8, 0.4, 0.1};
    auto c = stats::first_crossing(a, 0.5);
    ASSERT_TRUE(c);
    EXPECT_DOUBLE_EQ(*c, 1.75);
    EXPECT_DOUBLE_EQ(*stats::first_crossing(a, 0.5, 2.0), 3.5);
    EXPECT_FALSE(stats::first_crossing(a, 0.05));
}

TEST(Pearson, IdentityAndAntisymmetry) {
    std::vector<double> x = {1, 5, 2, 8, 3};
    std::vector<double> nx;
    for (double v : x) nx.push_back(-v);
    EXPECT_NEAR(stats::pearson(x, x), 1.0, 1e-15);
    EXPECT_NEAR(stats::pearson(x, nx), -1.0, 1e-15);
}

TEST(Pearson, HandComputedValue) {
    // means 2.5 and 5; sxy = 11, sxx = 5, syy = 26
    std::vector<double> x = {1, 2, 3, 4}, y = {2, 4, 5, 9};
    EXPECT_NEAR(stats::pearson(x, y), 11.0 / std::sqrt(130.0), 1e-15);
    EXPECT_NEAR(stats::pearson(x, y), 0.9647638212377322, 1e-15);
}

TEST(Pearson, SymmetricAndAffineInvariant) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x(30), y(30), ax, by;
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = z(rng);
            y[i] = 0.5 * x[i] + z(rng);
        }
        const double a = std::exp(z(rng)), b = z(rng) * 10;
        for (double v : x) ax.push_back(a * v + b);
        for (double v : y) by.push_back(3.0 * v - 7.0);
        EXPECT_EQ(stats::pearson(x, y), stats::pearson(y, x));
        EXPECT_NEAR(stats::pearson(ax, by), stats::pearson(x, y), 1e-12);
    }
}

TEST(Pearson, PairwiseDeletionAndErrors) {
    std::vector<std::optional<double>> x = {1, std::nullopt, 3, 4, 5}, y = {2, 100, std::nullopt, 8, 10};
    auto r = stats::correlate(x, y);
    EXPECT_EQ(r.n_samples, 3u);
    EXPECT_NEAR(r.coefficient, 1.0, 1e-15);

    std::vector<double> a = {1, 2}, b = {1, 2, 3};
    EXPECT_EQ(code_of([&] { stats::pearson(a, b); }), Errc::LengthMismatch);
    std::vector<double> c = {1, 1, 1}, d = {1, 2, 3};
    EXPECT_EQ(code_of([&] { stats::pearson(c, d); }), Errc::ZeroVariance);
    std::vector<std::optional<double>> e = {1, std::nullopt, 3}, f = {std::nullopt, 2, 3};
    EXPECT_EQ(code_of([&] { stats::correlate(e, f); }), Errc::TooFewPairs);
}

TEST(Spearman, MonotoneTransformGivesOne) {
    std::vector<double> x = {0.1, 2, 3.5, 4, 9}, y;
    for (double v : x) y.push_back(std::exp(v));
    EXPECT_NEAR(stats::spearman(x, y), 1.0, 1e-15);
    std::vector<double> tied = {1, 2, 2, 3}, other = {1, 2, 3, 4};
    // average ranks 1, 2.5, 2.5, 4 against 1..4
    EXPECT_NEAR(stats::spearman(tied, other), 4.5 / std::sqrt(4.5 * 5.0), 1e-15);
}

TEST(CrossFeatureCorr, ConstructedTopFeatureRanksFirstAndTargetExcluded) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    std::vector<TraceSample> ego;
    for (int i = 0; i < 400; ++i) {
        auto s = sample(i);
        s.datarate = 1e6 + 1e5 * z(rng);
        for (auto& k : s.kpi) k = z(rng);
        s.set(Kpi::TB_Size, 2.0 * s.datarate + 1e4 * z(rng));
        s.speed = z(rng);
        s.latitude = 52 + 0.01 * z(rng);
        s.longitude = 13 + 0.01 * z(rng);
        ego.push_back(s);
    }
    auto r = stats::cross_feature_corr(ego, "datarate");
    ASSERT_FALSE(r.ranked.empty());
    EXPECT_EQ(r.ranked.front().feature_a, "PCell_Downlink_TB_Size");
    for (std::size_t i = 1; i < r.ranked.size(); ++i)
        EXPECT_GE(std::abs(r.ranked[i - 1].coefficient), std::abs(r.ranked[i].coefficient));
    for (const auto& c : r.ranked) EXPECT_NE(c.feature_a, "datarate");
    EXPECT_EQ(r.ranked.size() + r.skipped.size(), stats::feature_columns().size() - 1);
}

TEST(CrossFeatureCorr, ConstantFeatureSkippedNotFatal) {
    std::vector<TraceSample> ego;
    for (int i = 0; i < 20; ++i) {
        auto s = sample(i);
        s.datarate = i * i;
        ego.push_back(s);
    }
    auto r = stats::cross_feature_corr(ego, "datarate");
    // speed, latitude and longitude are constant in the helper sample
    EXPECT_EQ(r.skipped.size(), 3u);
}

namespace {

std::vector<align::AlignedPair> pairs_with_corr(double r, int feature_offset = 0) {
    // zero-mean, orthogonal, equal-norm bases give an exact coefficient
    const std::vector<double> x = {1, -1, 1, -1}, z = {1, 1, -1, -1};
    std::vector<align::AlignedPair> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        align::AlignedPair p;
        p.ego = sample(static_cast<double>(i));
        p.lead = sample(static_cast<double>(i), "pc1");
        p.ego.set(Kpi::RSRP_max, x[i] + feature_offset);
        p.lead.set(Kpi::RSRP_max, r * x[i] + std::sqrt(1 - r * r) * z[i]);
        out.push_back(p);
    }
    return out;
}

}  // namespace

TEST(PairwiseAvgCorr, EqualWeightMean) {
    std::map<int, std::vector<align::AlignedPair>> sets;
    sets[1] = pairs_with_corr(0.4);
    sets[2] = pairs_with_corr(0.8);
    auto m = stats::pairwise_avg_corr(sets, {"PCell_RSRP_max"});
    ASSERT_TRUE(m.at(0, 0));
    EXPECT_NEAR(*m.at(0, 0), 0.6, 1e-12);
    EXPECT_EQ(m.measurements_used[0], 2u);

    std::map<int, std::vector<align::AlignedPair>> one;
    one[5] = pairs_with_corr(0.4);
    EXPECT_NEAR(*stats::pairwise_avg_corr(one, {"PCell_RSRP_max"}).at(0, 0), 0.4, 1e-12);
}

TEST(PairwiseAvgCorr, IdenticalMeasurementsEqualSingle) {
    std::map<int, std::vector<align::AlignedPair>> one, many;
    one[1] = pairs_with_corr(0.3);
    for (int m = 0; m < 4; ++m) many[m] = pairs_with_corr(0.3);
    const std::vector<std::string> f = {"PCell_RSRP_max", "PCell_SNR_1"};
    auto a = stats::pairwise_avg_corr(one, f), b = stats::pairwise_avg_corr(many, f);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        ASSERT_EQ(a.values[i].has_value(), b.values[i].has_value());
        if (a.values[i]) {
            EXPECT_NEAR(*a.values[i], *b.values[i], 1e-12);
        }
    }
}

TEST(PairwiseAvgCorr, FailingMeasurementExcludedAndMissingFeatureReported) {
    std::map<int, std::vector<align::AlignedPair>> sets;
    sets[1] = pairs_with_corr(0.5);
    sets[2] = {pairs_with_corr(0.9).front()};  // a single pair cannot be correlated
    auto m = stats::pairwise_avg_corr(sets, {"PCell_RSRP_max", "not_a_column"});
    EXPECT_NEAR(*m.at(0, 0), 0.5, 1e-12);
    EXPECT_EQ(m.measurements_used[0], 1u);
    EXPECT_FALSE(m.at(1, 1).has_value());
    EXPECT_EQ(m.diagonal().size(), 2u);
}
