#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "pqos/align.hpp"

using namespace pqos;
using namespace pqos::align;
using pqos::testing::offset_m;
using pqos::testing::sample;

namespace {

/// Straight eastbound track at `speed` m/s, 1 Hz, optional lateral offset and jitter.
std::vector<TraceSample> track(double t0, std::size_t n, double east0, const std::string& dev, double north = 0.0,
                               double jitter = 0.0, std::uint64_t seed = 0, double speed = 10.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<TraceSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto s = sample(t0 + static_cast<double>(i), dev);
        auto [lat, lon] = offset_m(52.5, 13.4, north + jitter * z(rng), east0 + speed * static_cast<double>(i));
        s.latitude = lat;
        s.longitude = lon;
        s.speed = speed;
        out.push_back(s);
    }
    return out;
}

/// Exhaustive nearest-pair search with the documented tie-breaking.
std::vector<std::pair<double, double>> brute_force(const std::vector<TraceSample>& ego, const std::vector<TraceSample>& lead,
                                                   const OffsetBin& bin, double max_d) {
    std::vector<std::pair<double, double>> out;
    for (const auto& e : ego) {
        const TraceSample* best = nullptr;
        double bd = 0, bg = 0;
        for (const auto& l : lead) {
            const double gap = std::abs(e.timestamp - l.timestamp);
            if (gap < 60 * bin.begin_min || gap >= 60 * bin.end_min) continue;
            const double d = geodesic_distance(e, l);
            if (d > max_d) continue;
            const bool better = !best || d < bd || (d == bd && (gap < bg || (gap == bg && l.timestamp < best->timestamp)));
            if (better) {
                best = &l;
                bd = d;
                bg = gap;
            }
        }
        if (best) out.emplace_back(e.timestamp, best->timestamp);
    }
    return out;
}

}  // namespace

TEST(Geodesic, KnownDistances) {
    EXPECT_EQ(geodesic_distance(GeoPoint{52.52, 13.405}, GeoPoint{52.52, 13.405}), 0.0);
    // 1e-4 degree of meridian arc at 111.195 km per degree
    EXPECT_NEAR(geodesic_distance(GeoPoint{52.5200, 13.4050}, GeoPoint{52.5201, 13.4050}), 11.1195, 11.12 * 0.01);
    const double equatorial_degree = std::numbers::pi * kEarthRadiusM / 180.0;
    EXPECT_NEAR(equatorial_degree, 111195.0, 1.0);
    EXPECT_NEAR(geodesic_distance(GeoPoint{0, 0}, GeoPoint{0, 1}), 111195.0, 111195.0 * 0.005);
}

TEST(Geodesic, RejectsInvalidCoordinates) {
    EXPECT_THROW(geodesic_distance(GeoPoint{91, 0}, GeoPoint{0, 0}), Error);
    EXPECT_THROW(geodesic_distance(GeoPoint{0, 0}, GeoPoint{0, -181}), Error);
}

TEST(Geodesic, SymmetryAndTriangleInequality) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180);
    for (int i = 0; i < 2000; ++i) {
        GeoPoint a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
        const double ab = geodesic_distance(a, b), ba = geodesic_distance(b, a);
        EXPECT_EQ(ab, ba);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, geodesic_distance(a, c) + geodesic_distance(c, b) + 1e-6 * ab);
    }
}

TEST(TemporalAlign, IdenticalGrid) {
    auto ego = track(100, 50, 0, "pc4"), lead = track(100, 50, 30, "pc1");
    auto r = temporal_align(ego, lead);
    ASSERT_EQ(r.pairs.size(), 50u);
    EXPECT_EQ(r.unmatched, 0u);
    for (const auto& p : r.pairs) {
        EXPECT_EQ(p.delta_t, 0.0);
        EXPECT_NEAR(p.delta_s, 30.0, 0.05);
        EXPECT_EQ(p.delta_v, 0.0);
    }
}

TEST(TemporalAlign, ShiftWithinToleranceMatchesExhaustiveOracle) {
    auto ego = track(100, 50, 0, "pc4"), lead = track(100.4, 50, 0, "pc1");
    auto r = temporal_align(ego, lead, 0.5);
    ASSERT_EQ(r.pairs.size(), 50u);
    for (std::size_t i = 0; i < r.pairs.size(); ++i) {
        EXPECT_NEAR(r.pairs[i].delta_t, 0.4, 1e-9);
        // exhaustive nearest-in-time search over the whole lead series
        double best = 1e9, best_ts = 0;
        for (const auto& l : lead)
            if (std::abs(l.timestamp - ego[i].timestamp) < best) {
                best = std::abs(l.timestamp - ego[i].timestamp);
                best_ts = l.timestamp;
            }
        EXPECT_EQ(r.pairs[i].lead.timestamp, best_ts);
    }
}

TEST(TemporalAlign, ShiftBeyondTolerance) {
    // 5 s grid so a 2 s shift cannot land on a neighbouring sample
    std::vector<TraceSample> ego, lead;
    for (int i = 0; i < 40; ++i) {
        ego.push_back(sample(100 + 5.0 * i));
        lead.push_back(sample(102 + 5.0 * i, "pc1"));
    }
    auto r = temporal_align(ego, lead, 0.5);
    EXPECT_TRUE(r.pairs.empty());
    EXPECT_EQ(r.unmatched, ego.size());
}

TEST(TemporalAlign, LeadSampleUsedOnce) {
    std::vector<TraceSample> ego = {sample(10.0), sample(10.2), sample(10.4)};
    std::vector<TraceSample> lead = {sample(10.1, "pc1"), sample(10.5, "pc1")};
    auto r = temporal_align(ego, lead, 0.5);
    ASSERT_EQ(r.pairs.size(), 2u);
    EXPECT_EQ(r.unmatched, 1u);
    EXPECT_NE(r.pairs[0].lead.timestamp, r.pairs[1].lead.timestamp);
    for (const auto& p : r.pairs) EXPECT_LE(p.delta_t, 0.5);
}

TEST(SpatialAlign, RetraceNinetySecondsApart) {
    auto ego = track(1000, 200, 0, "pc4");
    auto lead = track(910, 300, 0, "pc1");  // same coordinates 90 s earlier
    auto bins = spatial_align(ego, lead);
    ASSERT_EQ(bins.size(), 2u);
    EXPECT_TRUE(bins[0].empty());
    ASSERT_EQ(bins[1].pairs.size(), ego.size());
    for (const auto& p : bins[1].pairs) {
        EXPECT_EQ(p.delta_s, 0.0);
        EXPECT_EQ(p.delta_t, 90.0);
    }
}

TEST(SpatialAlign, LateralOffsetBeyondThreshold) {
    auto ego = track(1000, 200, 0, "pc4");
    auto lead = track(940, 300, 0, "pc1", 25.0);
    for (const auto& b : spatial_align(ego, lead)) EXPECT_TRUE(b.empty());
}

TEST(SpatialAlign, ConvoyRecallAgainstBruteForce) {
    auto ego = track(1000, 600, 0, "pc4", 0.0, 5.0, 1);
    auto lead = track(970, 700, 0, "pc1", 0.0, 5.0, 2);
    SpatialAlignSpec spec;
    auto bins = spatial_align(ego, lead, spec);
    auto oracle = brute_force(ego, lead, spec.bins[0], spec.max_distance_m);
    ASSERT_FALSE(oracle.empty());
    std::size_t hit = 0;
    for (std::size_t i = 0, k = 0; i < bins[0].pairs.size(); ++i) {
        while (k < oracle.size() && oracle[k].first < bins[0].pairs[i].ego.timestamp) ++k;
        if (k < oracle.size() && oracle[k].first == bins[0].pairs[i].ego.timestamp &&
            oracle[k].second == bins[0].pairs[i].lead.timestamp)
            ++hit;
    }
    EXPECT_GE(static_cast<double>(hit), 0.95 * static_cast<double>(oracle.size()));
    EXPECT_GE(static_cast<double>(bins[0].pairs.size()), 0.95 * static_cast<double>(ego.size()));
}

TEST(SpatialAlign, ExactEqualityWithBruteForceAndPairInvariants) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 4; ++trial) {
        const double headway = std::uniform_real_distribution<double>(20, 100)(rng);
        auto ego = track(5000, 500, 0, "pc4", 0.0, 6.0, 10 + trial, 8.0);
        auto lead = track(5000 - std::round(headway), 600, 0, "pc1", 0.0, 6.0, 20 + trial, 8.0);
        SpatialAlignSpec spec;
        spec.bins = {{0.0, 0.5}, {0.5, 1.0}, {1.0, 2.0}};
        auto bins = spatial_align(ego, lead, spec);
        for (std::size_t b = 0; b < spec.bins.size(); ++b) {
            auto oracle = brute_force(ego, lead, spec.bins[b], spec.max_distance_m);
            ASSERT_EQ(bins[b].pairs.size(), oracle.size());
            for (std::size_t i = 0; i < oracle.size(); ++i) {
                const auto& p = bins[b].pairs[i];
                EXPECT_EQ(p.ego.timestamp, oracle[i].first);
                EXPECT_EQ(p.lead.timestamp, oracle[i].second);
                EXPECT_GE(p.delta_s, 0.0);
                EXPECT_LE(p.delta_s, spec.max_distance_m);
                EXPECT_GE(p.delta_t, 60 * spec.bins[b].begin_min);
                EXPECT_LT(p.delta_t, 60 * spec.bins[b].end_min);
            }
        }
    }
}

TEST(SpatialAlign, TieBreakPrefersSmallerGapThenEarlierLead) {
    auto e = sample(1000);
    auto l1 = sample(930, "pc1"), l2 = sample(950, "pc1"), l3 = sample(1050, "pc1");
    SpatialAlignSpec spec;
    spec.bins = {{0.0, 2.0}};
    std::vector<TraceSample> ego = {e}, lead = {l1, l2, l3};
    auto r = spatial_align(ego, lead, spec);
    ASSERT_EQ(r[0].pairs.size(), 1u);
    EXPECT_EQ(r[0].pairs[0].lead.timestamp, 950.0);  // gap 50 beats 70; 950 beats 1050 on equal gap
}

TEST(SpatialAlign, InvalidSpec) {
    std::vector<TraceSample> ego = {sample(1)}, lead = {sample(1, "pc1")};
    SpatialAlignSpec overlap;
    overlap.bins = {{0, 2}, {1, 3}};
    EXPECT_THROW(spatial_align(ego, lead, overlap), Error);
    SpatialAlignSpec neg;
    neg.min_distance_m = -1;
    EXPECT_THROW(spatial_align(ego, lead, neg), Error);
}
