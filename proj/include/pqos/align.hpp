#pragma once

// Temporal and spatial pairing of ego and lead series.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "pqos/error.hpp"
#include "pqos/trace_store.hpp"

namespace pqos::align {

inline constexpr double kEarthRadiusM = 6371008.8;

struct GeoPoint {
    double latitude;
    double longitude;
};

/// Haversine great-circle distance in meters on the mean-radius sphere.
inline double geodesic_distance(GeoPoint a, GeoPoint b) {
    auto valid = [](GeoPoint p) {
        return p.latitude >= -90.0 && p.latitude <= 90.0 && p.longitude >= -180.0 && p.longitude <= 180.0;
    };
    if (!valid(a) || !valid(b)) throw Error(Errc::InvalidCoordinate, "latitude/longitude out of range");
    constexpr double rad = std::numbers::pi / 180.0;
    const double phi1 = a.latitude * rad;
    const double phi2 = b.latitude * rad;
    const double dphi = (b.latitude - a.latitude) * rad;
    const double dlambda = (b.longitude - a.longitude) * rad;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    const double h = std::min(1.0, s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

inline double geodesic_distance(const TraceSample& a, const TraceSample& b) {
    return geodesic_distance(GeoPoint{a.latitude, a.longitude}, GeoPoint{b.latitude, b.longitude});
}

struct AlignedPair {
    TraceSample ego;
    TraceSample lead;
    double delta_t = 0.0;  // |lead.timestamp - ego.timestamp|, seconds
    double delta_s = 0.0;  // meters
    double delta_v = 0.0;  // ego speed - lead speed, m/s
};

inline AlignedPair make_pair(const TraceSample& ego, const TraceSample& lead) {
    return {ego, lead, std::abs(lead.timestamp - ego.timestamp), geodesic_distance(ego, lead), ego.speed - lead.speed};
}

struct TemporalAlignment {
    std::vector<AlignedPair> pairs;
    std::size_t unmatched = 0;
};

/// Monotone two-pointer matching: each ego sample takes the closest unused
/// lead sample at or after the previous match, within `tolerance` seconds.
inline TemporalAlignment temporal_align(std::span<const TraceSample> ego, std::span<const TraceSample> lead,
                                        double tolerance = 0.5) {
    TemporalAlignment out;
    std::size_t j = 0;
    for (const auto& e : ego) {
        while (j < lead.size() && lead[j].timestamp < e.timestamp - tolerance) ++j;
        std::size_t best = lead.size();
        double best_gap = std::numeric_limits<double>::infinity();
        for (std::size_t k = j; k < lead.size() && lead[k].timestamp <= e.timestamp + tolerance; ++k) {
            const double gap = std::abs(lead[k].timestamp - e.timestamp);
            if (gap < best_gap) {
                best_gap = gap;
                best = k;
            }
        }
        if (best == lead.size()) {
            ++out.unmatched;
            continue;
        }
        out.pairs.push_back(make_pair(e, lead[best]));
        j = best + 1;
    }
    return out;
}

/// Temporal-gap bin in minutes, half-open [begin, end).
struct OffsetBin {
    double begin_min;
    double end_min;

    [[nodiscard]] bool contains(double gap_seconds) const {
        return gap_seconds >= 60.0 * begin_min && gap_seconds < 60.0 * end_min;
    }
    bool operator==(const OffsetBin&) const = default;
    auto operator<=>(const OffsetBin&) const = default;
};

struct SpatialAlignSpec {
    double min_distance_m = 0.0;
    double max_distance_m = 20.0;
    std::vector<OffsetBin> bins = {{0.0, 1.0}, {1.0, 2.0}};

    void validate() const {
        if (min_distance_m < 0.0 || max_distance_m < min_distance_m)
            throw Error(Errc::InvalidConfig, "distance threshold must satisfy 0 <= min <= max");
        for (std::size_t i = 0; i < bins.size(); ++i) {
            if (!(bins[i].end_min > bins[i].begin_min) || bins[i].begin_min < 0.0)
                throw Error(Errc::InvalidConfig, "offset bin must be a non-empty interval of non-negative minutes");
            if (i > 0 && bins[i].begin_min < bins[i - 1].end_min)
                throw Error(Errc::InvalidConfig, "offset bins must be ascending and non-overlapping");
        }
    }

    [[nodiscard]] bool within_threshold(double d) const { return d >= min_distance_m && d <= max_distance_m; }
};

struct SpatialBinResult {
    OffsetBin bin;
    std::vector<AlignedPair> pairs;
    [[nodiscard]] bool empty() const { return pairs.empty(); }
};

/// Strict weak order used to pick among lead candidates: distance, then
/// temporal gap, then lead timestamp.
inline bool better_candidate(double dist, double gap, double ts, double best_dist, double best_gap, double best_ts) {
    if (dist != best_dist) return dist < best_dist;
    if (gap != best_gap) return gap < best_gap;
    return ts < best_ts;
}

/// For every ego sample and bin, selects the geodesically closest lead
/// sample whose |time gap| lies in the bin and whose distance lies within the
/// threshold. Lead samples may be reused by several ego samples.
inline std::vector<SpatialBinResult> spatial_align(std::span<const TraceSample> ego, std::span<const TraceSample> lead,
                                                   const SpatialAlignSpec& spec = {}) {
    spec.validate();
    std::vector<SpatialBinResult> out;
    out.reserve(spec.bins.size());
    std::vector<double> lead_ts(lead.size());
    for (std::size_t i = 0; i < lead.size(); ++i) lead_ts[i] = lead[i].timestamp;

    for (const auto& bin : spec.bins) {
        SpatialBinResult res{bin, {}};
        const double hi = 60.0 * bin.end_min;
        for (const auto& e : ego) {
            // candidate window widened by one sample on each side; the exact
            // bin predicate is applied per candidate
            const auto first = std::lower_bound(lead_ts.begin(), lead_ts.end(), e.timestamp - hi);
            const auto last = std::upper_bound(lead_ts.begin(), lead_ts.end(), e.timestamp + hi);
            std::size_t b = static_cast<std::size_t>(first - lead_ts.begin());
            std::size_t t = static_cast<std::size_t>(last - lead_ts.begin());
            if (b > 0) --b;
            if (t < lead.size()) ++t;
            std::size_t best = lead.size();
            double bd = 0, bg = 0, bt = 0;
            for (std::size_t k = b; k < t; ++k) {
                const double gap = std::abs(e.timestamp - lead[k].timestamp);
                if (!bin.contains(gap)) continue;
                const double d = geodesic_distance(e, lead[k]);
                if (!spec.within_threshold(d)) continue;
                if (best == lead.size() || better_candidate(d, gap, lead[k].timestamp, bd, bg, bt)) {
                    best = k;
                    bd = d;
                    bg = gap;
                    bt = lead[k].timestamp;
                }
            }
            if (best != lead.size()) res.pairs.push_back(make_pair(e, lead[best]));
        }
        out.push_back(std::move(res));
    }
    return out;
}

}  // namespace pqos::align
