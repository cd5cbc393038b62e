// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. The real-dataset criterion runs only when PQOS_REAL_DATA names a
// trace CSV (PQOS_REAL_CONFIG may supply column and role maps).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "helpers.hpp"
#include "pqos/align.hpp"
#include "pqos/eval.hpp"
#include "pqos/featureset.hpp"
#include "pqos/models/model.hpp"
#include "pqos/pipeline.hpp"
#include "pqos/stats.hpp"
#include "pqos/synthgen.hpp"
#include "pqos/workbench.hpp"

using namespace pqos;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
    Outcome outcome = Outcome::pass;
    std::string detail;
};

/// Collects check failures; the first few messages end up in the detail line.
class Checker {
public:
    void check(bool ok, const std::string& what) {
        ++checks_;
        if (ok) return;
        ++failures_;
        if (failures_ <= 3) messages_ += (messages_.empty() ? "" : "; ") + what;
    }
    [[nodiscard]] Verdict verdict(const std::string& summary) const {
        if (failures_ == 0) return {Outcome::pass, summary + " (" + std::to_string(checks_) + " checks)"};
        return {Outcome::fail, std::to_string(failures_) + "/" + std::to_string(checks_) + " checks failed: " + messages_};
    }

private:
    std::size_t checks_ = 0;
    std::size_t failures_ = 0;
    std::string messages_;
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1e", v);
    return buf;
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// 1 ---------------------------------------------------------------------------------

Verdict improvement_arithmetic() {
    struct Case {
        double baseline, candidate, published;
    };
    const Case cases[] = {{0.0705, 0.0438, 37.87}, {0.4096, 0.1874, 54.24}, {0.1074, 0.0675, 37.15}};
    Checker c;
    std::string got;
    for (const auto& k : cases) {
        const double p = eval::improvement(k.baseline, k.candidate);
        c.check(std::abs(p - k.published) <= 0.01, "improvement(" + fmt(k.baseline) + ", " + fmt(k.candidate) +
                                                       ") = " + fmt(p) + " vs " + fmt(k.published, 2));
        got += (got.empty() ? "" : ", ") + fmt(p, 3);
    }
    return c.verdict("improvements " + got + " %");
}

// 2 ---------------------------------------------------------------------------------

Verdict metric_properties() {
    Checker c;
    const std::vector<double> a = {0.2, 0.5, 0.9, 0.0};
    c.check(eval::smape(a, a) == 0.0, "smape(A, A) != 0");
    c.check(std::abs(eval::smape(std::vector<double>{1.0}, std::vector<double>{3.0}) - 1.0) < 1e-12, "smape(1, 3) != 1");
    c.check(std::abs(eval::smape(std::vector<double>{0.0}, std::vector<double>{2.0}) - 2.0) < 1e-12, "smape(0, 2) != 2");
    c.check(std::abs(eval::smape(std::vector<double>{2.0}, std::vector<double>{1.0}) - 2.0 / 3.0) < 1e-12,
            "smape(2, 1) != 2/3");
    // below the floor the denominator is eps
    c.check(std::abs(eval::smape(std::vector<double>{0.0}, std::vector<double>{1e-6}, 1e-3) - 1e-3) < 1e-12,
            "smape floor case");

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    std::uniform_int_distribution<int> len(1, 40);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> x(static_cast<std::size_t>(len(rng))), y(x.size());
        for (auto& v : x) v = u(rng);
        for (auto& v : y) v = u(rng);
        const double mae = eval::mae(x, y);
        const double rmse = eval::rmse(x, y);
        c.check(rmse >= mae - 1e-15 * std::max(1.0, mae), "rmse < mae on trial " + std::to_string(t));
        if (t < 200) {
            const double k = scale(rng);
            std::vector<double> kx = x, ky = y;
            for (auto& v : kx) v *= k;
            for (auto& v : ky) v *= k;
            const double s = eval::smape(x, y, 1e-300);
            const double ks = eval::smape(kx, ky, 1e-300);
            c.check(std::abs(s - ks) <= 1e-12 * std::max(1.0, s), "smape not scale invariant on trial " + std::to_string(t));
        }
    }
    return c.verdict("smape identity/hand cases/scale invariance, rmse >= mae on 1000 pairs");
}

// 3 ---------------------------------------------------------------------------------

Verdict geodesic_oracle() {
    using align::GeoPoint;
    Checker c;
    const double per_degree = std::numbers::pi * align::kEarthRadiusM / 180.0;
    const double meridian = align::geodesic_distance(GeoPoint{52.5200, 13.4050}, GeoPoint{52.5201, 13.4050});
    c.check(std::abs(meridian - 1e-4 * per_degree) <= 0.005 * 1e-4 * per_degree, "meridian case " + fmt(meridian));
    c.check(std::abs(meridian - 11.12) <= 0.01 * 11.12, "meridian case vs 11.12 m");
    const double equator = align::geodesic_distance(GeoPoint{0, 0}, GeoPoint{0, 1});
    c.check(std::abs(equator - per_degree) <= 0.005 * per_degree, "equatorial case " + fmt(equator));
    c.check(std::abs(equator - 111195.0) <= 0.005 * 111195.0, "equatorial case vs 111195 m");
    c.check(align::geodesic_distance(GeoPoint{52.52, 13.405}, GeoPoint{52.52, 13.405}) == 0.0, "identical points");

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> lat(-89.0, 89.0), lon(-180.0, 180.0);
    for (int t = 0; t < 10000; ++t) {
        GeoPoint a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, p{lat(rng), lon(rng)};
        const double ab = align::geodesic_distance(a, b), ba = align::geodesic_distance(b, a);
        const double ap = align::geodesic_distance(a, p), pb = align::geodesic_distance(p, b);
        c.check(ab >= 0.0 && ab == ba, "asymmetric on triple " + std::to_string(t));
        c.check(ab <= (ap + pb) * (1.0 + 1e-6), "triangle inequality on triple " + std::to_string(t));
    }
    return c.verdict("1e-4 deg meridian " + fmt(meridian, 3) + " m, equatorial degree " + fmt(equator, 1) + " m");
}

// 4 ---------------------------------------------------------------------------------

std::vector<TraceSample> convoy_track(double t0, std::size_t n, double headway, const std::string& dev,
                                      std::mt19937_64& rng, double jitter, const std::vector<double>& speed_profile) {
    std::normal_distribution<double> z;
    std::vector<double> along(speed_profile.size(), 0.0);
    for (std::size_t j = 1; j < along.size(); ++j) along[j] = along[j - 1] + speed_profile[j - 1];
    std::vector<TraceSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto s = testing::sample(t0 + static_cast<double>(i), dev);
        // the lead is `headway` seconds ahead along the same speed profile
        const std::size_t k = std::min(speed_profile.size() - 1, i + static_cast<std::size_t>(headway));
        auto [la, lo] = testing::offset_m(52.5, 13.4, jitter * z(rng), along[k] + jitter * z(rng));
        s.latitude = la;
        s.longitude = lo;
        s.speed = speed_profile[k];
        out.push_back(s);
    }
    return out;
}

/// Exhaustive nearest-pair search: distance, then gap, then lead timestamp.
std::vector<std::pair<double, double>> brute_force_pairs(const std::vector<TraceSample>& ego,
                                                         const std::vector<TraceSample>& lead, const align::OffsetBin& bin,
                                                         double min_d, double max_d) {
    std::vector<std::pair<double, double>> out;
    for (const auto& e : ego) {
        const TraceSample* best = nullptr;
        double bd = 0, bg = 0;
        for (const auto& l : lead) {
            const double gap = std::abs(e.timestamp - l.timestamp);
            if (gap < 60.0 * bin.begin_min || gap >= 60.0 * bin.end_min) continue;
            const double d = align::geodesic_distance(e, l);
            if (d < min_d || d > max_d) continue;
            if (!best || d < bd || (d == bd && (gap < bg || (gap == bg && l.timestamp < best->timestamp)))) {
                best = &l;
                bd = d;
                bg = gap;
            }
        }
        if (best) out.emplace_back(e.timestamp, best->timestamp);
    }
    return out;
}

Verdict spatial_oracle() {
    Checker c;
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<std::size_t> len(50, 2000);
    std::uniform_real_distribution<double> head(5.0, 110.0), dist(4.0, 30.0), jit(0.0, 4.0), spd(4.0, 16.0);
    std::size_t total_pairs = 0, max_len = 0;
    for (int s = 0; s < 50; ++s) {
        const std::size_t n_ego = len(rng), n_lead = len(rng);
        max_len = std::max({max_len, n_ego, n_lead});
        const double headway = std::floor(head(rng));
        const double jitter = jit(rng);
        std::vector<double> profile(std::max(n_ego, n_lead) + 200);
        double v = spd(rng);
        std::normal_distribution<double> dv(0.0, 0.3);
        for (auto& p : profile) p = v = std::clamp(v + dv(rng), 2.0, 20.0);
        const auto lead = convoy_track(1000.0, n_lead, headway, "pc1", rng, jitter, profile);
        const auto ego = convoy_track(1000.0 + headway, n_ego, 0.0, "pc4", rng, jitter, profile);
        align::SpatialAlignSpec spec;
        spec.max_distance_m = dist(rng);
        spec.min_distance_m = s % 5 == 0 ? 1.0 : 0.0;
        spec.bins = s % 3 == 0 ? std::vector<align::OffsetBin>{{0.0, 0.5}, {0.5, 1.0}, {1.0, 2.0}}
                               : std::vector<align::OffsetBin>{{0.0, 1.0}, {1.0, 2.0}};
        const auto got = align::spatial_align(ego, lead, spec);
        c.check(got.size() == spec.bins.size(), "bin count in scenario " + std::to_string(s));
        for (std::size_t b = 0; b < got.size(); ++b) {
            std::vector<std::pair<double, double>> pairs;
            for (const auto& p : got[b].pairs) {
                pairs.emplace_back(p.ego.timestamp, p.lead.timestamp);
                c.check(spec.bins[b].contains(p.delta_t) && spec.within_threshold(p.delta_s),
                        "pair invariant in scenario " + std::to_string(s));
            }
            const auto want = brute_force_pairs(ego, lead, spec.bins[b], spec.min_distance_m, spec.max_distance_m);
            c.check(pairs == want, "scenario " + std::to_string(s) + " bin " + std::to_string(b) + ": " +
                                       std::to_string(pairs.size()) + " vs oracle " + std::to_string(want.size()));
            total_pairs += want.size();
        }
    }
    return c.verdict("50 convoys up to " + std::to_string(max_len) + " samples, " + std::to_string(total_pairs) +
                     " oracle pairs matched");
}

// 5 ---------------------------------------------------------------------------------

features::FeatureDataset indexed_dataset(std::size_t n) {
    features::FeatureDataset d;
    d.name = "I";
    d.columns = {"row", "half"};
    d.X = Matrix(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
        d.X(r, 0) = static_cast<double>(r);
        d.X(r, 1) = 0.5 * static_cast<double>(r);
        d.y.push_back(static_cast<double>(r));
        d.timestamps.push_back(1000.0 + static_cast<double>(r));
    }
    return d;
}

Verdict split_window_arithmetic() {
    Checker c;
    c.check(features::split_point(9699, 0.8) == 7759, "floor(0.8 * 9699) != 7759");
    auto d = indexed_dataset(9699);
    const auto split = features::temporal_split(d, 0.8);
    c.check(split.train.rows() == 7759 && split.test.rows() == 1940, "train/test sizes");
    for (std::size_t lookback : {0u, 1u, 10u, 60u}) {
        const auto tw = features::windowize(split.train, lookback);
        const auto sw = features::windowize(split.test, lookback);
        c.check(tw.size() == 7759 - lookback, "train window count at lookback " + std::to_string(lookback));
        c.check(sw.size() == 1940 - lookback, "test window count at lookback " + std::to_string(lookback));
        // feature 0 carries the source row index, so window content reveals its rows
        bool train_ok = true, test_ok = true;
        for (std::size_t i = 0; i < tw.size(); ++i) {
            auto w = tw.window(i);
            for (std::size_t k = 0; k < w.size(); k += 2) train_ok &= w[k] < 7759.0;
            train_ok &= tw.targets[i] < 7759.0;
        }
        for (std::size_t i = 0; i < sw.size(); ++i) {
            auto w = sw.window(i);
            for (std::size_t k = 0; k < w.size(); k += 2) test_ok &= w[k] >= 7759.0;
            test_ok &= sw.targets[i] >= 7759.0;
        }
        c.check(train_ok, "train window reaches into the test split at lookback " + std::to_string(lookback));
        c.check(test_ok, "test window reaches into the train split at lookback " + std::to_string(lookback));
    }
    for (std::size_t n : {61u, 100u, 2500u}) c.check(features::windowize(indexed_dataset(n), 60).size() == n - 60, "n - lookback");
    return c.verdict("7759/1940, n - lookback windows, no straddle");
}

// 6 ---------------------------------------------------------------------------------

struct StumpSplit {
    std::size_t feature = 0;
    double lo = 0, hi = 0;  // threshold must lie in [lo, hi)
};

/// Every SSE-optimal single split; distinct features can induce the same
/// partition and therefore tie exactly.
struct StumpOracle {
    double sse = std::numeric_limits<double>::infinity();
    std::vector<StumpSplit> optimal;
};

StumpOracle best_stump(const Matrix& X, const std::vector<double>& y) {
    struct Candidate {
        StumpSplit split;
        double sse;
    };
    std::vector<Candidate> all;
    const std::size_t n = y.size();
    for (std::size_t f = 0; f < X.cols; ++f) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return X(a, f) < X(b, f); });
        for (std::size_t k = 1; k < n; ++k) {
            if (X(order[k - 1], f) == X(order[k], f)) continue;
            double sl = 0, sr = 0;
            for (std::size_t i = 0; i < k; ++i) sl += y[order[i]];
            for (std::size_t i = k; i < n; ++i) sr += y[order[i]];
            const double ml = sl / static_cast<double>(k), mr = sr / static_cast<double>(n - k);
            double sse = 0;
            for (std::size_t i = 0; i < k; ++i) sse += (y[order[i]] - ml) * (y[order[i]] - ml);
            for (std::size_t i = k; i < n; ++i) sse += (y[order[i]] - mr) * (y[order[i]] - mr);
            all.push_back({{f, X(order[k - 1], f), X(order[k], f)}, sse});
        }
    }
    StumpOracle best;
    for (const auto& c : all) best.sse = std::min(best.sse, c.sse);
    for (const auto& c : all)
        if (c.sse <= best.sse * (1.0 + 1e-12)) best.optimal.push_back(c.split);
    return best;
}

features::FeatureDataset noise_series(std::size_t n, std::size_t f, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    features::FeatureDataset d;
    d.name = "N";
    for (std::size_t c = 0; c < f; ++c) d.columns.push_back("f" + std::to_string(c));
    d.X = Matrix(n, f);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < f; ++c) d.X(r, c) = 0.5 + 0.2 * z(rng);
        d.y.push_back(0.3 * z(rng));
        d.timestamps.push_back(static_cast<double>(r));
    }
    return d;
}

Verdict model_correctness() {
    Checker c;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<std::size_t> rows(8, 60), cols(1, 4);
    for (int t = 0; t < 20; ++t) {
        const std::size_t n = rows(rng), f = cols(rng);
        Matrix X(n, f);
        std::vector<double> y(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t k = 0; k < f; ++k) X(r, k) = z(rng);
            y[r] = (X(r, 0) > 0.2 ? 2.0 : -1.0) + z(rng);
        }
        models::GbtConfig cfg;
        cfg.n_trees = 1;
        cfg.max_depth = 1;
        cfg.learning_rate = 1.0;
        cfg.min_samples_leaf = 1;
        const auto m = models::train_gbt(X, y, cfg);
        const auto oracle = best_stump(X, y);
        const auto p = m.predict(X);
        double sse = 0;
        for (std::size_t i = 0; i < n; ++i) sse += (p[i] - y[i]) * (p[i] - y[i]);
        const auto& root = m.trees.at(0).nodes.at(0);
        c.check(std::abs(sse - oracle.sse) <= 1e-9 * std::max(1.0, oracle.sse),
                "stump SSE " + fmt(sse, 6) + " vs oracle " + fmt(oracle.sse, 6) + " on dataset " + std::to_string(t));
        const bool matches = std::any_of(oracle.optimal.begin(), oracle.optimal.end(), [&](const StumpSplit& s) {
            return root.feature == static_cast<int>(s.feature) && root.threshold >= s.lo && root.threshold < s.hi;
        });
        c.check(matches, "stump split f" + std::to_string(root.feature) + "@" + fmt(root.threshold, 6) +
                             " is not among the optimal splits on dataset " + std::to_string(t));
    }

    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Matrix X(300, 4);
        std::vector<double> y(300);
        for (std::size_t r = 0; r < 300; ++r) {
            for (std::size_t k = 0; k < 4; ++k) X(r, k) = z(rng);
            y[r] = std::sin(X(r, 0)) + 0.5 * X(r, 3) * X(r, 0) + 0.1 * z(rng);
        }
        models::GbtConfig cfg;
        cfg.n_trees = 60;
        cfg.max_depth = 3;
        cfg.seed = seed;
        const auto m = models::train_gbt(X, y, cfg);
        for (std::size_t s = 1; s < m.loss_trace.size(); ++s)
            c.check(m.loss_trace[s] <= m.loss_trace[s - 1] + 1e-12, "training MSE increased at stage " + std::to_string(s));
    }

    const auto w = features::windowize(noise_series(14, 2, 1), 10);
    models::ConvNetConfig conv;
    conv.lookback = 10;
    conv.conv_layers = {{3, 4}, {2, 3}};
    conv.head_width = 4;
    conv.train.seed = 5;
    const double conv_err = models::grad_check(models::ConvNet(conv, 2), w);
    c.check(conv_err < 1e-4, "conv gradient check " + std::to_string(conv_err));
    const auto wr = features::windowize(noise_series(12, 2, 2), 8);
    models::RecurrentConfig rec;
    rec.lookback = 8;
    rec.hidden_size = 3;
    rec.train.seed = 6;
    const double rec_err = models::grad_check(models::RecurrentNet(rec, 2), wr);
    c.check(rec_err < 1e-4, "recurrent gradient check " + std::to_string(rec_err));

    // seed determinism: identical seeds give byte-identical model files
    const auto d = noise_series(220, 3, 3);
    const auto split = features::temporal_split(d, 0.8);
    auto replay = [&](auto train) { return models::serialize(train()) == models::serialize(train()); };
    models::GbtConfig g;
    g.n_trees = 20;
    g.subsample_fraction = 0.7;
    g.seed = 11;
    c.check(replay([&] { return models::train_gbt(split.train, g); }), "gbt replay differs");
    const auto tw = features::windowize(split.train, 20);
    models::ConvNetConfig cc;
    cc.lookback = 20;
    cc.conv_layers = {{4, 20}};
    cc.train.epochs = 3;
    cc.train.seed = 11;
    c.check(replay([&] { return models::train_conv(tw, cc); }), "conv replay differs");
    models::RecurrentConfig rc;
    rc.lookback = 20;
    rc.train.epochs = 2;
    rc.train.seed = 11;
    c.check(replay([&] { return models::train_recurrent(tw, rc); }), "recurrent replay differs");
    g.seed = 12;
    const auto other = models::serialize(models::train_gbt(split.train, g));
    g.seed = 11;
    c.check(other != models::serialize(models::train_gbt(split.train, g)), "gbt ignores its seed");

    return c.verdict("20 stumps match, MSE monotone, grad err conv " + sci(conv_err) + " recurrent " + sci(rec_err) +
                     ", byte-exact replay");
}

// 7 and 8 ---------------------------------------------------------------------------

struct GridResult {
    eval::MetricsReport gbt;
    eval::MetricsReport nets;
    std::size_t egf_rows = 0;
    std::string error;
};

GridResult synthetic_grid() {
    GridResult g;
    try {
        const synth::SynthConfig cfg;
        const auto out = synth::generate_traces(cfg);
        const auto aligned = align_measurements(out.traces, out.roles);
        std::map<features::DatasetKind, features::FeatureDataset> ds;
        for (auto k : features::kAllDatasets) ds[k] = prepare_dataset(aligned, k);
        g.egf_rows = ds[features::DatasetKind::EGF].rows();

        eval::ExperimentOptions opts;
        opts.n_runs = 20;
        opts.jobs = jobs();
        const eval::ModelConfigs models_cfg;
        using features::DatasetKind;
        g.gbt = eval::run_experiment({ds[DatasetKind::EGF], ds[DatasetKind::EGLT], ds[DatasetKind::EGLT_Diff],
                                      ds[DatasetKind::EGLS]},
                                     {models::ModelKind::gbt}, models_cfg, opts);
        g.nets = eval::run_experiment({ds[DatasetKind::EGF], ds[DatasetKind::EGLT], ds[DatasetKind::EGLS]},
                                      {models::ModelKind::conv, models::ModelKind::recurrent}, models_cfg, opts);
    } catch (const std::exception& e) {
        g.error = e.what();
    }
    return g;
}

double median_mae(const eval::MetricsReport& r, const std::string& d, const std::string& m) {
    const auto* c = r.cell(d, m);
    return c && c->runs_ok > 0 ? c->mae.median : std::numeric_limits<double>::quiet_NaN();
}

Verdict core_claim(const GridResult& g) {
    if (!g.error.empty()) return {Outcome::fail, "grid failed: " + g.error};
    Checker c;
    c.check(g.egf_rows >= 8000, "synthetic scenario has only " + std::to_string(g.egf_rows) + " ego samples");
    const double egf = median_mae(g.gbt, "EGF", "gbt");
    const double eglt = median_mae(g.gbt, "EGLT", "gbt");
    const double egls = median_mae(g.gbt, "EGLS", "gbt");
    c.check(egls <= 0.9 * egf, "gbt EGLS " + fmt(egls) + " not 10% below EGF " + fmt(egf));
    c.check(eglt <= 0.9 * egf, "gbt EGLT " + fmt(eglt) + " not 10% below EGF " + fmt(egf));
    std::string detail = "median MAE gbt EGF " + fmt(egf) + " EGLT " + fmt(eglt) + " (" +
                         fmt(eval::improvement(egf, eglt), 1) + "%) EGLS " + fmt(egls) + " (" +
                         fmt(eval::improvement(egf, egls), 1) + "%)";
    for (const char* m : {"conv", "recurrent"}) {
        const double e = median_mae(g.nets, "EGF", m);
        const double t = median_mae(g.nets, "EGLT", m);
        const double s = median_mae(g.nets, "EGLS", m);
        c.check(s < e, std::string(m) + " EGLS " + fmt(s) + " not below EGF " + fmt(e));
        c.check(t <= e, std::string(m) + " EGLT " + fmt(t) + " above EGF " + fmt(e));
        detail += "; " + std::string(m) + " EGF " + fmt(e) + " EGLT " + fmt(t) + " EGLS " + fmt(s);
    }
    return c.verdict(detail);
}

Verdict diff_direction(const GridResult& g) {
    if (!g.error.empty()) return {Outcome::fail, "grid failed: " + g.error};
    Checker c;
    const double eglt = median_mae(g.gbt, "EGLT", "gbt");
    const double diff = median_mae(g.gbt, "EGLT_Diff", "gbt");
    c.check(diff <= eglt, "gbt EGLT_Diff " + fmt(diff) + " above EGLT " + fmt(eglt));
    return c.verdict("median MAE gbt EGLT_Diff " + fmt(diff) + " vs EGLT " + fmt(eglt));
}

// 9 ---------------------------------------------------------------------------------

Verdict real_dataset() {
    const char* data = std::getenv("PQOS_REAL_DATA");
    if (!data || !*data) return {Outcome::skip, "PQOS_REAL_DATA not set"};
    try {
        pipeline::PipelineConfig cfg;
        if (const char* conf = std::getenv("PQOS_REAL_CONFIG"); conf && *conf) cfg = pipeline::load_config(conf);
        if (cfg.trace.role_map.empty()) return {Outcome::fail, "a role map is required (PQOS_REAL_CONFIG trace.role_map)"};
        LoadOptions lo;
        lo.column_map = cfg.trace.column_map;
        auto traces = load_traces(data, lo);
        if (auto f = cfg.scenario_filter()) traces = filter_scenario(traces, *f);
        const auto aligned = align_measurements(traces, cfg.trace.role_map, {cfg.temporal_tolerance_s, cfg.spatial});

        Checker c;
        using features::DatasetKind;
        std::map<DatasetKind, features::FeatureDataset> ds;
        for (auto k : {DatasetKind::EGF, DatasetKind::EGLT, DatasetKind::EGLS}) ds[k] = prepare_dataset(aligned, k);
        const std::pair<DatasetKind, double> expected[] = {
            {DatasetKind::EGF, 9699}, {DatasetKind::EGLT, 9442}, {DatasetKind::EGLS, 6146}};
        std::string counts;
        for (const auto& [k, n] : expected) {
            const double got = static_cast<double>(ds[k].rows());
            c.check(std::abs(got - n) <= 0.02 * n, features::to_string(k) + " rows " + fmt(got, 0) + " vs " + fmt(n, 0));
            counts += features::to_string(k) + "=" + fmt(got, 0) + " ";
        }
        const auto ranked = stats::cross_feature_corr(aligned.ego, "datarate");
        const std::string top = ranked.ranked.empty() ? "none" : ranked.ranked.front().feature_a;
        c.check(top == "PCell_Downlink_TB_Size", "top correlate is " + top);

        eval::ExperimentOptions opts;
        opts.n_runs = 5;
        opts.jobs = jobs();
        const auto rep = eval::run_experiment({ds[DatasetKind::EGF], ds[DatasetKind::EGLS]},
                                              {models::ModelKind::gbt, models::ModelKind::conv,
                                               models::ModelKind::recurrent},
                                              cfg.model_configs, opts);
        for (const char* m : {"gbt", "conv", "recurrent"}) {
            const double e = median_mae(rep, "EGF", m), s = median_mae(rep, "EGLS", m);
            c.check(s < e, std::string(m) + " EGLS " + fmt(s) + " not below EGF " + fmt(e));
        }
        return c.verdict(counts + "top correlate " + top);
    } catch (const std::exception& e) {
        return {Outcome::fail, e.what()};
    }
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    int failures = 0;
    auto report = [&](int id, const std::string& name, const std::function<Verdict()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {Outcome::fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
        if (v.outcome == Outcome::fail) ++failures;
        std::printf("%s [%d] %s: %s [%.1f s]\n", tag, id, name.c_str(), v.detail.c_str(), secs);
        std::fflush(stdout);
    };

    report(1, "improvement arithmetic", improvement_arithmetic);
    report(2, "metric properties", metric_properties);
    report(3, "geodesic oracle", geodesic_oracle);
    report(4, "spatial alignment oracle equivalence", spatial_oracle);
    report(5, "split and window arithmetic", split_window_arithmetic);
    report(6, "model correctness", model_correctness);
    GridResult grid;
    report(7, "lead features lower error (synthetic)", [&] {
        grid = synthetic_grid();
        return core_claim(grid);
    });
    report(8, "diff transform direction (synthetic)", [&] { return diff_direction(grid); });
    report(9, "real dataset", real_dataset);
    std::printf("%s\n", failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED");
    return failures == 0 ? 0 : 1;
}
