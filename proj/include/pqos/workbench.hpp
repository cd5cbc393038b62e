#pragma once

// Glue from a trace collection to the five model-ready datasets.

#include <algorithm>
#include <map>
#include <vector>

#include "pqos/align.hpp"
#include "pqos/featureset.hpp"
#include "pqos/trace_store.hpp"

namespace pqos {

struct AlignedMeasurements {
    std::vector<TraceSample> ego;                      // every ego sample, time ordered
    std::map<int, std::vector<align::AlignedPair>> temporal;
    std::map<int, std::vector<align::SpatialBinResult>> spatial;
    std::size_t temporal_unmatched = 0;
};

struct AlignOptions {
    double temporal_tolerance_s = 0.5;
    align::SpatialAlignSpec spatial;
};

/// Splits each measurement into ego/lead via the role map and aligns it.
/// Measurements without a usable role assignment are skipped.
inline AlignedMeasurements align_measurements(const TraceCollection& c, const RoleMap& roles,
                                              const AlignOptions& opt = {}) {
    AlignedMeasurements out;
    for (int mid : c.measurement_ids()) {
        EgoLeadSeries s;
        try {
            s = split_ego_lead(c, mid, roles);
        } catch (const Error& e) {
            if (e.code() == Errc::AmbiguousRoles) continue;
            throw;
        }
        auto t = align::temporal_align(s.ego, s.lead, opt.temporal_tolerance_s);
        out.temporal_unmatched += t.unmatched;
        out.temporal[mid] = std::move(t.pairs);
        out.spatial[mid] = align::spatial_align(s.ego, s.lead, opt.spatial);
        out.ego.insert(out.ego.end(), s.ego.begin(), s.ego.end());
    }
    std::stable_sort(out.ego.begin(), out.ego.end(),
                     [](const TraceSample& a, const TraceSample& b) { return a.timestamp < b.timestamp; });
    return out;
}

inline std::vector<align::AlignedPair> flatten_temporal(const AlignedMeasurements& a) {
    std::vector<align::AlignedPair> all;
    for (const auto& [mid, v] : a.temporal) all.insert(all.end(), v.begin(), v.end());
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& x, const auto& y) { return x.ego.timestamp < y.ego.timestamp; });
    return all;
}

inline std::vector<align::SpatialBinResult> flatten_spatial(const AlignedMeasurements& a) {
    std::vector<align::SpatialBinResult> all;
    for (const auto& [mid, v] : a.spatial) all.insert(all.end(), v.begin(), v.end());
    return all;
}

/// Unscaled dataset of the requested kind.
inline features::FeatureDataset build_dataset(const AlignedMeasurements& a, features::DatasetKind kind) {
    using features::DatasetKind;
    switch (kind) {
    case DatasetKind::EGF: return features::build_egf(a.ego);
    case DatasetKind::EGLT: return features::build_eglt(flatten_temporal(a));
    case DatasetKind::EGLT_Diff: return features::diff_transform(features::build_eglt(flatten_temporal(a)));
    case DatasetKind::EGLS: return features::build_egls(flatten_spatial(a));
    case DatasetKind::EGLS_Ratio: return features::ratio_transform(features::build_egls(flatten_spatial(a)));
    }
    throw Error(Errc::InvalidConfig, "unknown dataset kind");
}

struct BuildOptions {
    features::ScaleFit scale_fit = features::ScaleFit::full;
    double train_ratio = 0.8;
    bool prune = false;
    double prune_threshold = 0.7;
};

/// Builds, optionally prunes, and min-max scales one dataset.
inline features::FeatureDataset prepare_dataset(const AlignedMeasurements& a, features::DatasetKind kind,
                                                const BuildOptions& opt = {}) {
    auto d = build_dataset(a, kind);
    if (opt.prune) d = features::prune_collinear(d, opt.prune_threshold).dataset;
    return features::minmax_scale(d, opt.scale_fit, opt.train_ratio);
}

}  // namespace pqos
