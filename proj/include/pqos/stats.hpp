#pragma once

// Exploratory correlation analyses: target autocorrelation, feature/target
// cross-correlation, and ego/lead pairwise correlation averaged per measurement.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pqos/error.hpp"
#include "pqos/trace_store.hpp"

namespace pqos::stats {

enum class CorrelationMethod { pearson, spearman };

struct CorrelationResult {
    std::string feature_a;
    std::string feature_b;
    double coefficient = 0.0;
    std::size_t n_samples = 0;
};

/// Mean-removed sample autocorrelation for lags 0..max_lag (biased
/// normalisation, so every value lies in [-1, 1]).
inline std::vector<double> acf(std::span<const double> series, std::size_t max_lag) {
    const std::size_t n = series.size();
    if (n <= max_lag) throw Error(Errc::SeriesTooShort, "series length must exceed max_lag");
    const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
    double denom = 0.0;
    for (double v : series) denom += (v - mean) * (v - mean);
    if (!(denom > 0.0) || std::adjacent_find(series.begin(), series.end(), std::not_equal_to<>()) == series.end())
        throw Error(Errc::ZeroVariance, "constant series");
    std::vector<double> out(max_lag + 1);
    out[0] = 1.0;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) num += (series[t] - mean) * (series[t + k] - mean);
        out[k] = std::clamp(num / denom, -1.0, 1.0);
    }
    return out;
}

/// First lag (in seconds) where the autocorrelation drops to `level`,
/// linearly interpolated between adjacent lags. nullopt when it never does.
inline std::optional<double> first_crossing(std::span<const double> acf_values, double level,
                                            double seconds_per_lag = 1.0) {
    for (std::size_t k = 1; k < acf_values.size(); ++k) {
        const double a = acf_values[k - 1];
        const double b = acf_values[k];
        if (a > level && b <= level) {
            const double frac = (a - level) / (a - b);
            return (static_cast<double>(k - 1) + frac) * seconds_per_lag;
        }
    }
    return std::nullopt;
}

namespace detail {

inline bool is_constant(std::span<const double> v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

inline double pearson_complete(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    // an exact test: a constant column's mean-removed sum of squares can round to a tiny positive value
    if (is_constant(x) || is_constant(y)) throw Error(Errc::ZeroVariance, "correlation of a constant sequence");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(Errc::ZeroVariance, "correlation of a constant sequence");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Average ranks (1-based), ties share their mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace detail

/// Pairwise-deleting correlation: positions where either side is null are
/// skipped. Symmetric in its arguments by construction.
inline CorrelationResult correlate(std::span<const std::optional<double>> x, std::span<const std::optional<double>> y,
                                   CorrelationMethod method = CorrelationMethod::pearson) {
    if (x.size() != y.size()) throw Error(Errc::LengthMismatch, "correlation inputs differ in length");
    std::vector<double> a, b;
    a.reserve(x.size());
    b.reserve(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] && y[i]) {
            a.push_back(*x[i]);
            b.push_back(*y[i]);
        }
    }
    if (a.size() < 2) throw Error(Errc::TooFewPairs, "fewer than 2 complete pairs");
    double r = 0.0;
    if (method == CorrelationMethod::spearman) {
        const auto ra = detail::ranks(a);
        const auto rb = detail::ranks(b);
        r = detail::pearson_complete(ra, rb);
    } else {
        r = detail::pearson_complete(a, b);
    }
    return {{}, {}, r, a.size()};
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(Errc::LengthMismatch, "pearson inputs differ in length");
    if (x.size() < 2) throw Error(Errc::TooFewPairs, "pearson needs at least 2 pairs");
    return detail::pearson_complete(x, y);
}

inline double pearson(std::span<const std::optional<double>> x, std::span<const std::optional<double>> y) {
    return correlate(x, y, CorrelationMethod::pearson).coefficient;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(Errc::LengthMismatch, "spearman inputs differ in length");
    if (x.size() < 2) throw Error(Errc::TooFewPairs, "spearman needs at least 2 pairs");
    return detail::pearson_complete(detail::ranks(x), detail::ranks(y));
}

inline std::vector<std::optional<double>> column(std::span<const TraceSample> series, std::string_view name) {
    std::vector<std::optional<double>> out;
    out.reserve(series.size());
    for (const auto& s : series) out.push_back(numeric_value(s, name));
    return out;
}

/// Numeric columns considered by the cross-correlation ranking.
inline std::vector<std::string> feature_columns() {
    std::vector<std::string> cols;
    for (auto n : kKpiNames) cols.emplace_back(n);
    for (auto n : kMotionColumns) cols.emplace_back(n);
    return cols;
}

struct RankedCorrelations {
    std::vector<CorrelationResult> ranked;  // by |coefficient| descending
    std::vector<std::pair<std::string, std::string>> skipped;  // (feature, reason)
};

inline RankedCorrelations cross_feature_corr(std::span<const TraceSample> ego, const std::string& target,
                                             CorrelationMethod method = CorrelationMethod::pearson) {
    if (ego.empty()) throw Error(Errc::Empty, "empty ego series");
    if (!is_numeric_column(target)) throw Error(Errc::SchemaMismatch, "unknown target column '" + target + "'");
    const auto y = column(ego, target);
    RankedCorrelations out;
    for (const auto& f : feature_columns()) {
        if (f == target) continue;
        const auto x = column(ego, f);
        try {
            auto r = correlate(x, y, method);
            r.feature_a = f;
            r.feature_b = target;
            out.ranked.push_back(std::move(r));
        } catch (const Error& e) {
            out.skipped.emplace_back(f, e.what());
        }
    }
    std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const auto& a, const auto& b) {
        return std::abs(a.coefficient) > std::abs(b.coefficient);
    });
    return out;
}

/// Entry (i, j) is the equal-weight mean over measurements of
/// corr(ego feature i, lead feature j); the diagonal is the same-feature
/// analysis. Entries with no usable measurement stay nullopt.
struct PairwiseMatrix {
    std::vector<std::string> features;
    std::vector<std::optional<double>> values;  // row-major, features.size()^2
    std::vector<std::size_t> measurements_used;

    [[nodiscard]] std::optional<double> at(std::size_t ego_feature, std::size_t lead_feature) const {
        return values[ego_feature * features.size() + lead_feature];
    }
    [[nodiscard]] std::vector<std::optional<double>> diagonal() const {
        std::vector<std::optional<double>> d;
        for (std::size_t i = 0; i < features.size(); ++i) d.push_back(at(i, i));
        return d;
    }
};

template <typename PairRange>
PairwiseMatrix pairwise_avg_corr(const std::map<int, PairRange>& sets, const std::vector<std::string>& features,
                                 CorrelationMethod method = CorrelationMethod::pearson) {
    if (sets.empty()) throw Error(Errc::Empty, "no measurement sets");
    const std::size_t f = features.size();
    PairwiseMatrix m;
    m.features = features;
    m.values.assign(f * f, std::nullopt);
    m.measurements_used.assign(f * f, 0);
    std::vector<double> sums(f * f, 0.0);
    for (const auto& [mid, pairs] : sets) {
        std::vector<std::vector<std::optional<double>>> ego_cols(f), lead_cols(f);
        for (std::size_t i = 0; i < f; ++i) {
            for (const auto& p : pairs) {
                ego_cols[i].push_back(numeric_value(p.ego, features[i]));
                lead_cols[i].push_back(numeric_value(p.lead, features[i]));
            }
        }
        for (std::size_t i = 0; i < f; ++i) {
            for (std::size_t j = 0; j < f; ++j) {
                try {
                    sums[i * f + j] += correlate(ego_cols[i], lead_cols[j], method).coefficient;
                    ++m.measurements_used[i * f + j];
                } catch (const Error&) {
                    // excluded from this feature pair's mean
                }
            }
        }
    }
    for (std::size_t k = 0; k < f * f; ++k)
        if (m.measurements_used[k] > 0) m.values[k] = sums[k] / static_cast<double>(m.measurements_used[k]);
    return m;
}

}  // namespace pqos::stats
