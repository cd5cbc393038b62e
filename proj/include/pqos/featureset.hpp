#pragma once

// Feature dataset construction (EGF, EGLT, EGLS and their transformed
// variants), collinearity pruning, min-max scaling, chronological split and
// lookback windowing.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pqos/align.hpp"
#include "pqos/error.hpp"
#include "pqos/matrix.hpp"
#include "pqos/stats.hpp"
#include "pqos/trace_store.hpp"

namespace pqos::features {

enum class DatasetKind { EGF, EGLT, EGLT_Diff, EGLS, EGLS_Ratio };

inline constexpr std::array<DatasetKind, 5> kAllDatasets = {DatasetKind::EGF, DatasetKind::EGLT,
                                                            DatasetKind::EGLT_Diff, DatasetKind::EGLS,
                                                            DatasetKind::EGLS_Ratio};

inline std::string to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::EGF: return "EGF";
    case DatasetKind::EGLT: return "EGLT";
    case DatasetKind::EGLT_Diff: return "EGLT_Diff";
    case DatasetKind::EGLS: return "EGLS";
    case DatasetKind::EGLS_Ratio: return "EGLS_Ratio";
    }
    return "?";
}

/// Accepts "EGLT_Diff", "eglt-diff", "EGLT-Diff", ...
inline std::optional<DatasetKind> parse_dataset(std::string_view s) {
    std::string v(s);
    for (auto& c : v) c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (auto k : kAllDatasets) {
        std::string n = to_string(k);
        for (auto& c : n) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (n == v) return k;
    }
    return std::nullopt;
}

inline constexpr std::string_view kLeadPrefix = "lead_";

inline std::string lead(std::string_view name) { return std::string(kLeadPrefix) + std::string(name); }

/// Ego-only columns shared by every dataset.
inline std::vector<std::string> egf_columns() {
    return {"PCell_SNR_1",    "PCell_SNR_2",           "PCell_RSRP_max",         "PCell_RSRQ_max",
            "PCell_RSSI_max", "PCell_Downlink_TB_Size", "PCell_Downlink_Num_RBs", "PCell_Downlink_Average_MCS"};
}

inline std::vector<std::string> eglt_columns() {
    auto c = egf_columns();
    for (const char* n : {"datarate", "PCell_Downlink_TB_Size", "PCell_Downlink_Tx_Power", "PCell_Downlink_Num_RBs",
                          "PCell_Downlink_Average_MCS", "PCell_RSSI_max"})
        c.push_back(lead(n));
    c.emplace_back("delta_v");
    c.emplace_back("delta_s");
    return c;
}

inline std::vector<std::string> egls_columns() {
    auto c = egf_columns();
    for (const char* n : {"PCell_SNR_1", "PCell_SNR_2", "PCell_RSRP_max", "PCell_RSRQ_max", "PCell_RSSI_max",
                          "PCell_Downlink_Num_RBs", "PCell_Downlink_Average_MCS"})
        c.push_back(lead(n));
    c.emplace_back("delta_v");
    c.emplace_back("delta_s");
    c.emplace_back("delta_t");
    return c;
}

struct ColumnScale {
    double min = 0.0;
    double max = 0.0;
    bool constant = false;

    [[nodiscard]] double apply(double v) const { return constant ? 0.0 : (v - min) / (max - min); }
    [[nodiscard]] double invert(double v) const { return constant ? min : v * (max - min) + min; }
    bool operator==(const ColumnScale&) const = default;
};

enum class ScaleFit { full, train };

inline std::string to_string(ScaleFit f) { return f == ScaleFit::full ? "full" : "train"; }

inline std::optional<ScaleFit> parse_scale_fit(std::string_view s) {
    if (s == "full") return ScaleFit::full;
    if (s == "train") return ScaleFit::train;
    return std::nullopt;
}

struct ScaleParams {
    std::vector<ColumnScale> columns;
    ColumnScale target;
    ScaleFit fit = ScaleFit::full;
    std::size_t fit_rows = 0;
    bool operator==(const ScaleParams&) const = default;
};

struct FeatureDataset {
    std::string name;
    std::vector<std::string> columns;
    Matrix X;
    std::vector<double> y;           // ego datarate
    std::vector<double> timestamps;  // ego timestamp per row
    std::optional<ScaleParams> scale;
    bool chronological = true;

    [[nodiscard]] std::size_t rows() const { return y.size(); }
    [[nodiscard]] std::size_t n_features() const { return columns.size(); }

    [[nodiscard]] std::optional<std::size_t> column_index(std::string_view c) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == c) return i;
        return std::nullopt;
    }

    /// Rows [begin, end) as a new dataset sharing name, columns and scaling.
    [[nodiscard]] FeatureDataset slice(std::size_t begin, std::size_t end) const {
        FeatureDataset d;
        d.name = name;
        d.columns = columns;
        d.scale = scale;
        d.chronological = chronological;
        d.X = Matrix(end - begin, columns.size());
        std::copy(X.data.begin() + static_cast<std::ptrdiff_t>(begin * X.cols),
                  X.data.begin() + static_cast<std::ptrdiff_t>(end * X.cols), d.X.data.begin());
        d.y.assign(y.begin() + static_cast<std::ptrdiff_t>(begin), y.begin() + static_cast<std::ptrdiff_t>(end));
        d.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                            timestamps.begin() + static_cast<std::ptrdiff_t>(end));
        return d;
    }
};

// --- builders ---------------------------------------------------------------

namespace detail {

template <typename Row>
using Extractor = std::function<std::optional<double>(const Row&)>;

/// Generic row assembly: rows with any null among the selected columns (or
/// the target) are dropped.
template <typename Row>
FeatureDataset assemble(std::string name, std::vector<std::string> columns, std::span<const Row> rows,
                        const std::vector<Extractor<Row>>& extract, const std::function<double(const Row&)>& target,
                        const std::function<double(const Row&)>& timestamp) {
    FeatureDataset d;
    d.name = std::move(name);
    d.columns = std::move(columns);
    d.X = Matrix(0, d.columns.size());
    std::vector<double> buf(d.columns.size());
    for (const auto& r : rows) {
        bool complete = true;
        for (std::size_t c = 0; c < extract.size(); ++c) {
            auto v = extract[c](r);
            if (!v || !std::isfinite(*v)) {
                complete = false;
                break;
            }
            buf[c] = *v;
        }
        if (!complete) continue;
        d.X.append_row(buf);
        d.y.push_back(target(r));
        d.timestamps.push_back(timestamp(r));
    }
    if (d.rows() == 0) throw Error(Errc::EmptyDataset, d.name + " has no complete rows");
    d.chronological = std::is_sorted(d.timestamps.begin(), d.timestamps.end());
    return d;
}

inline std::optional<double> side_value(const TraceSample& s, std::string_view name) { return numeric_value(s, name); }

inline std::vector<Extractor<align::AlignedPair>> pair_extractors(const std::vector<std::string>& columns) {
    std::vector<Extractor<align::AlignedPair>> out;
    for (const auto& c : columns) {
        if (c == "delta_t")
            out.emplace_back([](const align::AlignedPair& p) -> std::optional<double> { return p.delta_t; });
        else if (c == "delta_s")
            out.emplace_back([](const align::AlignedPair& p) -> std::optional<double> { return p.delta_s; });
        else if (c == "delta_v")
            out.emplace_back([](const align::AlignedPair& p) -> std::optional<double> { return p.delta_v; });
        else if (c.starts_with(kLeadPrefix)) {
            std::string base = c.substr(kLeadPrefix.size());
            out.emplace_back([base](const align::AlignedPair& p) { return side_value(p.lead, base); });
        } else {
            out.emplace_back([c](const align::AlignedPair& p) { return side_value(p.ego, c); });
        }
    }
    return out;
}

}  // namespace detail

inline FeatureDataset build_egf(std::span<const TraceSample> ego) {
    if (ego.empty()) throw Error(Errc::EmptyDataset, "empty ego series");
    auto cols = egf_columns();
    std::vector<detail::Extractor<TraceSample>> ex;
    for (const auto& c : cols) ex.emplace_back([c](const TraceSample& s) { return numeric_value(s, c); });
    return detail::assemble<TraceSample>(
        to_string(DatasetKind::EGF), cols, ego, ex, [](const TraceSample& s) { return s.datarate; },
        [](const TraceSample& s) { return s.timestamp; });
}

inline FeatureDataset build_eglt(std::span<const align::AlignedPair> pairs) {
    if (pairs.empty()) throw Error(Errc::EmptyDataset, "no temporally aligned pairs");
    auto cols = eglt_columns();
    return detail::assemble<align::AlignedPair>(
        to_string(DatasetKind::EGLT), cols, pairs, detail::pair_extractors(cols),
        [](const align::AlignedPair& p) { return p.ego.datarate; },
        [](const align::AlignedPair& p) { return p.ego.timestamp; });
}

/// Concatenates every bin's pairs, ordered by ego timestamp (bin order breaks ties).
inline FeatureDataset build_egls(std::span<const align::SpatialBinResult> bins) {
    std::vector<align::AlignedPair> all;
    for (const auto& b : bins) all.insert(all.end(), b.pairs.begin(), b.pairs.end());
    if (all.empty()) throw Error(Errc::EmptyDataset, "every spatial bin is empty");
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.ego.timestamp < b.ego.timestamp; });
    auto cols = egls_columns();
    return detail::assemble<align::AlignedPair>(
        to_string(DatasetKind::EGLS), cols, std::span<const align::AlignedPair>(all), detail::pair_extractors(cols),
        [](const align::AlignedPair& p) { return p.ego.datarate; },
        [](const align::AlignedPair& p) { return p.ego.timestamp; });
}

// --- lead/ego transforms ---------------------------------------------------------

inline constexpr double kRatioGuard = 1e-6;

/// lead / (ego + sign(ego)*guard) when |ego| < guard, otherwise lead / ego.
inline double guarded_ratio(double lead_value, double ego_value) {
    if (std::abs(ego_value) < kRatioGuard) {
        const double sign = ego_value < 0.0 ? -1.0 : 1.0;
        return lead_value / (ego_value + sign * kRatioGuard);
    }
    return lead_value / ego_value;
}

namespace detail {

inline FeatureDataset pair_transform(const FeatureDataset& d, std::string_view suffix, std::string_view prefix,
                                     const std::function<double(double, double)>& combine) {
    if (d.scale) throw Error(Errc::InvalidConfig, "apply lead/ego transforms before scaling");
    // ego column index -> lead column index
    std::map<std::size_t, std::size_t> paired;
    std::vector<bool> is_lead_partner(d.columns.size(), false);
    for (std::size_t i = 0; i < d.columns.size(); ++i) {
        if (d.columns[i].starts_with(kLeadPrefix)) continue;
        if (auto j = d.column_index(lead(d.columns[i]))) {
            paired[i] = *j;
            is_lead_partner[*j] = true;
        }
    }
    if (paired.empty()) throw Error(Errc::NoPairedColumns, d.name + " has no lead_/ego column pairs");

    FeatureDataset out;
    out.name = d.name + std::string(suffix);
    out.y = d.y;
    out.timestamps = d.timestamps;
    out.chronological = d.chronological;
    std::vector<std::function<double(std::span<const double>)>> makers;
    for (std::size_t i = 0; i < d.columns.size(); ++i) {
        if (is_lead_partner[i]) continue;
        if (auto it = paired.find(i); it != paired.end()) {
            out.columns.push_back(std::string(prefix) + d.columns[i]);
            const std::size_t e = i, l = it->second;
            makers.emplace_back([=](std::span<const double> r) { return combine(r[l], r[e]); });
        } else {
            out.columns.push_back(d.columns[i]);
            makers.emplace_back([i](std::span<const double> r) { return r[i]; });
        }
    }
    out.X = Matrix(d.rows(), out.columns.size());
    for (std::size_t r = 0; r < d.rows(); ++r) {
        auto src = d.X.row(r);
        for (std::size_t c = 0; c < makers.size(); ++c) out.X(r, c) = makers[c](src);
    }
    return out;
}

}  // namespace detail

/// Each (lead_F, F) pair collapses into one column `diff_F` = lead - ego,
/// placed where F was.
inline FeatureDataset diff_transform(const FeatureDataset& d) {
    return detail::pair_transform(d, "_Diff", "diff_", [](double l, double e) { return l - e; });
}

/// Each (lead_F, F) pair collapses into `ratio_F` = lead / ego (guarded).
inline FeatureDataset ratio_transform(const FeatureDataset& d) {
    return detail::pair_transform(d, "_Ratio", "ratio_", guarded_ratio);
}

// --- collinearity pruning ----------------------------------------------------------

struct PruneResult {
    FeatureDataset dataset;
    std::vector<std::string> retained;
    std::vector<std::pair<std::string, std::string>> dropped;  // (dropped, correlated retained column)
};

/// Greedy in declared order: a column is dropped when its |Pearson r| with
/// any already retained column exceeds `threshold`. Constant columns count
/// as uncorrelated.
inline PruneResult prune_collinear(const FeatureDataset& d, double threshold = 0.7) {
    PruneResult res;
    std::vector<std::size_t> keep;
    std::vector<std::vector<double>> cols(d.n_features());
    for (std::size_t c = 0; c < d.n_features(); ++c) cols[c] = d.X.column(c);
    for (std::size_t c = 0; c < d.n_features(); ++c) {
        std::optional<std::size_t> culprit;
        for (std::size_t k : keep) {
            double r = 0.0;
            try {
                r = stats::pearson(cols[k], cols[c]);
            } catch (const Error&) {
                r = 0.0;
            }
            if (std::abs(r) > threshold) {
                culprit = k;
                break;
            }
        }
        if (culprit)
            res.dropped.emplace_back(d.columns[c], d.columns[*culprit]);
        else
            keep.push_back(c);
    }
    FeatureDataset& out = res.dataset;
    out.name = d.name;
    out.y = d.y;
    out.timestamps = d.timestamps;
    out.chronological = d.chronological;
    out.X = Matrix(d.rows(), keep.size());
    std::vector<ColumnScale> kept_scale;
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.columns.push_back(d.columns[keep[k]]);
        if (d.scale) kept_scale.push_back(d.scale->columns[keep[k]]);
        for (std::size_t r = 0; r < d.rows(); ++r) out.X(r, k) = d.X(r, keep[k]);
    }
    if (d.scale) {
        out.scale = d.scale;
        out.scale->columns = std::move(kept_scale);
    }
    res.retained = out.columns;
    return res;
}

// --- scaling -----------------------------------------------------------------

inline ColumnScale fit_scale(std::span<const double> v) {
    ColumnScale s;
    if (v.empty()) {
        s.constant = true;
        return s;
    }
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    s.min = *lo;
    s.max = *hi;
    s.constant = !(s.max > s.min);
    return s;
}

/// Min-max scaling of every feature column and the target. With
/// `ScaleFit::train` the extrema come from the first floor(train_ratio*n)
/// rows only, so later rows may fall outside [0, 1].
inline FeatureDataset minmax_scale(const FeatureDataset& d, ScaleFit fit_on = ScaleFit::full, double train_ratio = 0.8) {
    if (d.scale) throw Error(Errc::InvalidConfig, d.name + " is already scaled");
    const std::size_t fit_rows =
        fit_on == ScaleFit::full ? d.rows()
                                 : static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(d.rows())));
    if (fit_rows == 0) throw Error(Errc::TooFewRows, "no rows to fit scaling on");
    ScaleParams p;
    p.fit = fit_on;
    p.fit_rows = fit_rows;
    FeatureDataset out = d;
    for (std::size_t c = 0; c < d.n_features(); ++c) {
        auto col = d.X.column(c);
        p.columns.push_back(fit_scale(std::span<const double>(col).first(fit_rows)));
        for (std::size_t r = 0; r < d.rows(); ++r) out.X(r, c) = p.columns[c].apply(d.X(r, c));
    }
    p.target = fit_scale(std::span<const double>(d.y).first(fit_rows));
    for (auto& v : out.y) v = p.target.apply(v);
    out.scale = std::move(p);
    return out;
}

/// Undo `minmax_scale`.
inline FeatureDataset inverse_scale(const FeatureDataset& d) {
    if (!d.scale) return d;
    FeatureDataset out = d;
    for (std::size_t c = 0; c < d.n_features(); ++c)
        for (std::size_t r = 0; r < d.rows(); ++r) out.X(r, c) = d.scale->columns[c].invert(d.X(r, c));
    for (auto& v : out.y) v = d.scale->target.invert(v);
    out.scale.reset();
    return out;
}

// --- split and windows ----------------------------------------------------------

struct SplitDataset {
    FeatureDataset train;
    FeatureDataset test;
    std::size_t split_index = 0;
};

inline std::size_t split_point(std::size_t n, double ratio) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
}

/// Chronological split without shuffling: train = first floor(ratio*n) rows.
inline SplitDataset temporal_split(const FeatureDataset& d, double ratio = 0.8) {
    if (!d.chronological) throw Error(Errc::InvalidConfig, d.name + " rows are not in chronological order");
    if (d.rows() < 5) throw Error(Errc::TooFewRows, d.name + " needs at least 5 rows to split");
    const std::size_t k = split_point(d.rows(), ratio);
    return {d.slice(0, k), d.slice(k, d.rows()), k};
}

/// Windows of `lookback` consecutive rows, each labelled with the target of
/// the row that follows. Stored as windows x lookback x features, row-major.
/// A lookback of 0 yields one single-row window per row labelled with that
/// row's own target.
struct WindowSet {
    std::size_t lookback = 0;   // rows per window as requested
    std::size_t steps = 0;      // rows actually stored per window (max(1, lookback))
    std::size_t n_features = 0;
    std::vector<double> data;
    std::vector<double> targets;
    std::vector<double> target_timestamps;

    [[nodiscard]] std::size_t size() const { return targets.size(); }
    [[nodiscard]] std::size_t window_stride() const { return steps * n_features; }
    [[nodiscard]] std::span<const double> window(std::size_t i) const {
        return {data.data() + i * window_stride(), window_stride()};
    }
};

inline WindowSet windowize(const FeatureDataset& d, std::size_t lookback = 60) {
    if (d.rows() <= lookback || d.rows() == 0)
        throw Error(Errc::PartitionTooShort,
                    d.name + ": " + std::to_string(d.rows()) + " rows cannot fill a lookback of " + std::to_string(lookback));
    WindowSet w;
    w.lookback = lookback;
    w.steps = std::max<std::size_t>(1, lookback);
    w.n_features = d.n_features();
    const std::size_t n = d.rows() - lookback;
    w.data.reserve(n * w.window_stride());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t first = i;
        const std::size_t label = i + lookback;
        for (std::size_t r = first; r < first + w.steps; ++r) {
            auto row = d.X.row(r);
            w.data.insert(w.data.end(), row.begin(), row.end());
        }
        w.targets.push_back(d.y[label]);
        w.target_timestamps.push_back(d.timestamps[label]);
    }
    return w;
}

// --- JSON ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ColumnScale& s) {
    j = {{"min", s.min}, {"max", s.max}, {"constant", s.constant}};
}
inline void from_json(const nlohmann::json& j, ColumnScale& s) {
    s.min = j.at("min").get<double>();
    s.max = j.at("max").get<double>();
    s.constant = j.at("constant").get<bool>();
}
inline void to_json(nlohmann::json& j, const ScaleParams& p) {
    j = {{"columns", p.columns}, {"target", p.target}, {"fit", to_string(p.fit)}, {"fit_rows", p.fit_rows}};
}
inline void from_json(const nlohmann::json& j, ScaleParams& p) {
    p.columns = j.at("columns").get<std::vector<ColumnScale>>();
    p.target = j.at("target").get<ColumnScale>();
    auto f = parse_scale_fit(j.at("fit").get<std::string>());
    if (!f) throw Error(Errc::ParseError, "bad scale fit");
    p.fit = *f;
    p.fit_rows = j.at("fit_rows").get<std::size_t>();
}

}  // namespace pqos::features
