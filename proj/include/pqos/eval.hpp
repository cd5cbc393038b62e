#pragma once

// Error metrics, improvement over the ego-only baseline, the multi-run
// experiment grid and report emission.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "pqos/csv.hpp"
#include "pqos/error.hpp"
#include "pqos/featureset.hpp"
#include "pqos/models/model.hpp"
#include "pqos/svg.hpp"

namespace pqos::eval {

namespace detail {
inline void check_inputs(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size()) throw Error(Errc::LengthMismatch, "actual and predicted differ in length");
    if (actual.empty()) throw Error(Errc::Empty, "no values to score");
}
}  // namespace detail

inline double mae(std::span<const double> actual, std::span<const double> predicted) {
    detail::check_inputs(actual, predicted);
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(predicted[i] - actual[i]);
    return s / static_cast<double>(actual.size());
}

inline double rmse(std::span<const double> actual, std::span<const double> predicted) {
    detail::check_inputs(actual, predicted);
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) s += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
    return std::sqrt(s / static_cast<double>(actual.size()));
}

/// e^-8: the near-zero floor for the SMAPE denominator.
inline const double kDefaultSmapeEps = std::exp(-8.0);

/// (1/n) sum |F - A| / max(eps, (|A| + |F|) / 2).
inline double smape(std::span<const double> actual, std::span<const double> predicted, double eps = kDefaultSmapeEps) {
    detail::check_inputs(actual, predicted);
    if (!(eps > 0.0)) throw Error(Errc::InvalidConfig, "smape eps must be positive");
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double num = std::abs(predicted[i] - actual[i]);
        if (num == 0.0) continue;
        s += num / std::max(eps, (std::abs(actual[i]) + std::abs(predicted[i])) / 2.0);
    }
    return s / static_cast<double>(actual.size());
}

/// Percentage reduction of `candidate` relative to `baseline`.
inline double improvement(double baseline, double candidate) {
    if (!(baseline > 0.0)) throw Error(Errc::ZeroBaseline, "baseline must be positive");
    return 100.0 * (baseline - candidate) / baseline;
}

/// Two-decimal rendering used in tables.
inline std::string format_percent(double p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", p);
    return buf;
}

// --- experiment grid ----------------------------------------------------------------

struct ModelConfigs {
    models::GbtConfig gbt;
    models::ConvNetConfig conv;
    models::RecurrentConfig recurrent;
};

inline void to_json(nlohmann::json& j, const ModelConfigs& c) {
    j = {{"gbt", c.gbt}, {"conv", c.conv}, {"recurrent", c.recurrent}};
}
inline void from_json(const nlohmann::json& j, ModelConfigs& c) {
    c = {};
    if (j.contains("gbt")) c.gbt = j.at("gbt").get<models::GbtConfig>();
    if (j.contains("conv")) c.conv = j.at("conv").get<models::ConvNetConfig>();
    if (j.contains("recurrent")) c.recurrent = j.at("recurrent").get<models::RecurrentConfig>();
}

struct ExperimentOptions {
    std::size_t n_runs = 50;
    std::uint64_t base_seed = 0;
    double train_ratio = 0.8;
    double smape_eps = kDefaultSmapeEps;
    std::size_t jobs = 1;
    std::string baseline = "EGF";
};

struct RunMetrics {
    std::string dataset;
    std::string model;
    std::size_t run = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double mae = 0.0;
    double smape = 0.0;
    double rmse = 0.0;
};

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single run
    double median = 0.0;
};

inline Summary summarize(std::vector<double> v) {
    Summary s;
    if (v.empty()) return s;
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
    }
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    s.median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    return s;
}

struct CellAggregate {
    std::string dataset;
    std::string model;
    std::size_t runs_ok = 0;
    std::size_t runs_failed = 0;
    Summary mae, smape, rmse;
};

struct ImprovementRow {
    std::string dataset;
    std::string model;
    double mae = 0.0;
    double smape = 0.0;
    double rmse = 0.0;
};

/// True and predicted test-set target over time for one run of one cell.
struct PredictionTrace {
    std::string dataset;
    std::string model;
    std::size_t run = 0;
    std::vector<double> timestamps;
    std::vector<double> actual;
    std::vector<double> predicted;
};

struct MetricsReport {
    std::vector<std::string> datasets;
    std::vector<std::string> models;
    std::vector<RunMetrics> runs;
    std::vector<CellAggregate> aggregates;
    std::vector<ImprovementRow> improvements;
    std::vector<PredictionTrace> traces;
    std::string baseline = "EGF";
    nlohmann::json config;

    [[nodiscard]] const CellAggregate* cell(const std::string& dataset, const std::string& model) const {
        for (const auto& a : aggregates)
            if (a.dataset == dataset && a.model == model) return &a;
        return nullptr;
    }
    [[nodiscard]] const ImprovementRow* improvement_of(const std::string& dataset, const std::string& model) const {
        for (const auto& r : improvements)
            if (r.dataset == dataset && r.model == model) return &r;
        return nullptr;
    }
    /// Per-run metric values of one cell (successful runs only).
    [[nodiscard]] std::vector<double> values(const std::string& dataset, const std::string& model,
                                             double RunMetrics::*field) const {
        std::vector<double> out;
        for (const auto& r : runs)
            if (r.ok && r.dataset == dataset && r.model == model) out.push_back(r.*field);
        return out;
    }
};

/// Aggregates and baseline improvements from the per-run rows.
inline void finalize(MetricsReport& rep) {
    rep.aggregates.clear();
    rep.improvements.clear();
    for (const auto& d : rep.datasets) {
        for (const auto& m : rep.models) {
            CellAggregate a;
            a.dataset = d;
            a.model = m;
            std::vector<double> ma, sm, rm;
            for (const auto& r : rep.runs) {
                if (r.dataset != d || r.model != m) continue;
                if (!r.ok) {
                    ++a.runs_failed;
                    continue;
                }
                ++a.runs_ok;
                ma.push_back(r.mae);
                sm.push_back(r.smape);
                rm.push_back(r.rmse);
            }
            if (a.runs_ok == 0 && a.runs_failed == 0) continue;
            a.mae = summarize(ma);
            a.smape = summarize(sm);
            a.rmse = summarize(rm);
            rep.aggregates.push_back(a);
        }
    }
    for (const auto& m : rep.models) {
        const auto* base = rep.cell(rep.baseline, m);
        if (!base || base->runs_ok == 0) continue;
        for (const auto& d : rep.datasets) {
            if (d == rep.baseline) continue;
            const auto* c = rep.cell(d, m);
            if (!c || c->runs_ok == 0) continue;
            try {
                rep.improvements.push_back({d, m, improvement(base->mae.mean, c->mae.mean),
                                            improvement(base->smape.mean, c->smape.mean),
                                            improvement(base->rmse.mean, c->rmse.mean)});
            } catch (const Error& e) {
                spdlog::warn("no improvement for {}/{}: {}", d, m, e.what());
            }
        }
    }
}

namespace detail {

/// Prepared inputs of one dataset: its split, and windows per partition.
struct PreparedDataset {
    features::SplitDataset split;
    std::optional<features::WindowSet> train_windows;
    std::optional<features::WindowSet> test_windows;
};

struct RunOutput {
    RunMetrics metrics;
    std::vector<double> timestamps, actual, predicted;
};

inline RunOutput run_one(const PreparedDataset& prep, models::ModelKind kind, const ModelConfigs& cfgs,
                         std::uint64_t seed, double eps) {
    RunOutput out;
    if (kind == models::ModelKind::gbt) {
        auto cfg = cfgs.gbt;
        cfg.seed = seed;
        const auto m = models::train_gbt(prep.split.train, cfg);
        out.predicted = models::predict(m, prep.split.test.X);
        out.actual = prep.split.test.y;
        out.timestamps = prep.split.test.timestamps;
    } else {
        if (!prep.train_windows || !prep.test_windows)
            throw Error(Errc::PartitionTooShort, "partitions too short for the lookback window");
        models::TrainedModel m;
        if (kind == models::ModelKind::conv) {
            auto cfg = cfgs.conv;
            cfg.train.seed = seed;
            m = models::train_conv(*prep.train_windows, cfg, prep.split.train.columns);
        } else {
            auto cfg = cfgs.recurrent;
            cfg.train.seed = seed;
            m = models::train_recurrent(*prep.train_windows, cfg, prep.split.train.columns);
        }
        out.predicted = models::predict(m, *prep.test_windows);
        out.actual = prep.test_windows->targets;
        out.timestamps = prep.test_windows->target_timestamps;
    }
    for (double p : out.predicted)
        if (!std::isfinite(p)) throw Error(Errc::NonFiniteLoss, "non-finite prediction");
    out.metrics.mae = mae(out.actual, out.predicted);
    out.metrics.smape = smape(out.actual, out.predicted, eps);
    out.metrics.rmse = rmse(out.actual, out.predicted);
    out.metrics.ok = true;
    return out;
}

inline std::size_t lookback_for(models::ModelKind k, const ModelConfigs& c) {
    return k == models::ModelKind::conv ? c.conv.lookback : c.recurrent.lookback;
}

}  // namespace detail

/// Runs every (dataset, model, run) cell on the chronological test split.
/// Run r uses seed base_seed + r. Failed runs are recorded and excluded from
/// aggregates; a cell whose runs all fail aborts the grid.
inline MetricsReport run_experiment(const std::vector<features::FeatureDataset>& datasets,
                                    const std::vector<models::ModelKind>& kinds, const ModelConfigs& cfgs,
                                    const ExperimentOptions& opts) {
    if (datasets.empty() || kinds.empty() || opts.n_runs == 0) throw Error(Errc::Empty, "empty experiment grid");
    MetricsReport rep;
    rep.baseline = opts.baseline;
    for (const auto& d : datasets) rep.datasets.push_back(d.name);
    for (auto k : kinds) rep.models.push_back(models::to_string(k));

    std::vector<detail::PreparedDataset> prepared;
    bool needs_windows = std::any_of(kinds.begin(), kinds.end(), models::is_sequence_model);
    for (const auto& d : datasets) {
        detail::PreparedDataset p{features::temporal_split(d, opts.train_ratio), std::nullopt, std::nullopt};
        if (needs_windows) {
            std::size_t lookback = 0;
            for (auto k : kinds)
                if (models::is_sequence_model(k)) lookback = detail::lookback_for(k, cfgs);
            for (auto k : kinds)
                if (models::is_sequence_model(k) && detail::lookback_for(k, cfgs) != lookback)
                    throw Error(Errc::InvalidConfig, "sequence models must share one lookback");
            try {
                p.train_windows = features::windowize(p.split.train, lookback);
                p.test_windows = features::windowize(p.split.test, lookback);
            } catch (const Error& e) {
                spdlog::warn("{}: {}", d.name, e.what());
            }
        }
        prepared.push_back(std::move(p));
    }

    struct Task {
        std::size_t dataset, kind, run;
    };
    std::vector<Task> tasks;
    for (std::size_t d = 0; d < datasets.size(); ++d)
        for (std::size_t k = 0; k < kinds.size(); ++k)
            for (std::size_t r = 0; r < opts.n_runs; ++r) tasks.push_back({d, k, r});

    std::vector<detail::RunOutput> results(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const auto& t = tasks[i];
            const std::uint64_t seed = opts.base_seed + t.run;
            auto& res = results[i];
            try {
                res = detail::run_one(prepared[t.dataset], kinds[t.kind], cfgs, seed, opts.smape_eps);
            } catch (const std::exception& e) {
                res.metrics.ok = false;
                res.metrics.error = e.what();
                spdlog::warn("run failed: {}/{} run {}: {}", datasets[t.dataset].name, models::to_string(kinds[t.kind]),
                             t.run, e.what());
            }
            res.metrics.dataset = datasets[t.dataset].name;
            res.metrics.model = models::to_string(kinds[t.kind]);
            res.metrics.run = t.run;
            res.metrics.seed = seed;
            spdlog::debug("{}/{} run {} done", res.metrics.dataset, res.metrics.model, t.run);
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, tasks.size());
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }

    for (std::size_t i = 0; i < tasks.size(); ++i) rep.runs.push_back(results[i].metrics);
    // first successful run of each cell is kept for plotting
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto& r = results[i];
        if (!r.metrics.ok) continue;
        bool have = std::any_of(rep.traces.begin(), rep.traces.end(), [&](const PredictionTrace& t) {
            return t.dataset == r.metrics.dataset && t.model == r.metrics.model;
        });
        if (!have)
            rep.traces.push_back({r.metrics.dataset, r.metrics.model, r.metrics.run, std::move(r.timestamps),
                                  std::move(r.actual), std::move(r.predicted)});
    }
    finalize(rep);
    for (const auto& d : rep.datasets)
        for (const auto& m : rep.models) {
            const auto* c = rep.cell(d, m);
            if (c && c->runs_ok == 0) throw Error(Errc::AllRunsFailed, "every run of " + d + "/" + m + " failed");
        }
    rep.config = {{"models", cfgs},
                  {"n_runs", opts.n_runs},
                  {"base_seed", opts.base_seed},
                  {"train_ratio", opts.train_ratio},
                  {"smape_eps", opts.smape_eps},
                  {"baseline", opts.baseline}};
    return rep;
}

// --- serialization and emission -----------------------------------------------------

inline void to_json(nlohmann::json& j, const Summary& s) { j = {{"mean", s.mean}, {"std", s.std}, {"median", s.median}}; }
inline void from_json(const nlohmann::json& j, Summary& s) {
    s.mean = j.at("mean").get<double>();
    s.std = j.at("std").get<double>();
    s.median = j.at("median").get<double>();
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["datasets"] = r.datasets;
    j["models"] = r.models;
    j["baseline"] = r.baseline;
    j["config"] = r.config;
    auto& runs = j["runs"] = nlohmann::json::array();
    for (const auto& m : r.runs) {
        nlohmann::json row = {{"dataset", m.dataset}, {"model", m.model}, {"run", m.run}, {"seed", m.seed}, {"ok", m.ok}};
        if (m.ok) {
            row["mae"] = m.mae;
            row["smape"] = m.smape;
            row["rmse"] = m.rmse;
        } else {
            row["error"] = m.error;
        }
        runs.push_back(row);
    }
    auto& agg = j["aggregates"] = nlohmann::json::array();
    for (const auto& a : r.aggregates)
        agg.push_back({{"dataset", a.dataset}, {"model", a.model}, {"runs_ok", a.runs_ok},
                       {"runs_failed", a.runs_failed}, {"mae", a.mae}, {"smape", a.smape}, {"rmse", a.rmse}});
    auto& imp = j["improvements"] = nlohmann::json::array();
    for (const auto& i : r.improvements)
        imp.push_back({{"dataset", i.dataset}, {"model", i.model}, {"mae_pct", i.mae}, {"smape_pct", i.smape},
                       {"rmse_pct", i.rmse}});
    auto& tr = j["traces"] = nlohmann::json::array();
    for (const auto& t : r.traces)
        tr.push_back({{"dataset", t.dataset}, {"model", t.model}, {"run", t.run}, {"timestamps", t.timestamps},
                      {"actual", t.actual}, {"predicted", t.predicted}});
    return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
    MetricsReport r;
    try {
        r.datasets = j.at("datasets").get<std::vector<std::string>>();
        r.models = j.at("models").get<std::vector<std::string>>();
        r.baseline = j.at("baseline").get<std::string>();
        r.config = j.value("config", nlohmann::json::object());
        for (const auto& row : j.at("runs")) {
            RunMetrics m;
            m.dataset = row.at("dataset").get<std::string>();
            m.model = row.at("model").get<std::string>();
            m.run = row.at("run").get<std::size_t>();
            m.seed = row.at("seed").get<std::uint64_t>();
            m.ok = row.at("ok").get<bool>();
            if (m.ok) {
                m.mae = row.at("mae").get<double>();
                m.smape = row.at("smape").get<double>();
                m.rmse = row.at("rmse").get<double>();
            } else {
                m.error = row.value("error", "");
            }
            r.runs.push_back(m);
        }
        for (const auto& t : j.value("traces", nlohmann::json::array()))
            r.traces.push_back({t.at("dataset").get<std::string>(), t.at("model").get<std::string>(),
                                t.at("run").get<std::size_t>(), t.at("timestamps").get<std::vector<double>>(),
                                t.at("actual").get<std::vector<double>>(),
                                t.at("predicted").get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, std::string("report: ") + e.what());
    }
    finalize(r);
    return r;
}

/// Table layout: one row per dataset, (mae, smape, rmse) mean triples per model.
inline void write_metrics_csv(const MetricsReport& r, const std::filesystem::path& path) {
    csv::Writer w(path);
    csv::Row header = {"dataset"};
    for (const auto& m : r.models)
        for (const char* metric : {"mae", "smape", "rmse"}) header.push_back(m + "_" + metric);
    w.row(header);
    for (const auto& d : r.datasets) {
        csv::Row row = {d};
        for (const auto& m : r.models) {
            const auto* c = r.cell(d, m);
            if (!c || c->runs_ok == 0) {
                row.insert(row.end(), {"", "", ""});
                continue;
            }
            row.push_back(csv::format_double(c->mae.mean));
            row.push_back(csv::format_double(c->smape.mean));
            row.push_back(csv::format_double(c->rmse.mean));
        }
        w.row(row);
    }
    w.close();
}

inline void write_improvements_csv(const MetricsReport& r, const std::filesystem::path& path) {
    csv::Writer w(path);
    w.row({"dataset", "model", "mae_pct", "smape_pct", "rmse_pct"});
    for (const auto& i : r.improvements)
        w.row({i.dataset, i.model, format_percent(i.mae), format_percent(i.smape), format_percent(i.rmse)});
    w.close();
}

inline std::string prediction_plot(const PredictionTrace& t) {
    std::vector<double> x = t.timestamps;
    if (!x.empty()) {
        const double t0 = x.front();
        for (auto& v : x) v -= t0;
    }
    return svg::line_chart("True and predicted datarate, test set: " + t.dataset + " / " + t.model,
                           "time since test start [s]", "datarate (scaled)", x,
                           {{"true", "#1f77b4", t.actual}, {"predicted", "#d62728", t.predicted}});
}

/// Writes metrics.csv, improvements.csv, report.json and
/// plots/<dataset>_<model>.svg under `outdir`. Returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const MetricsReport& r, const std::filesystem::path& outdir) {
    if (r.runs.empty()) throw Error(Errc::Empty, "empty report");
    std::error_code ec;
    std::filesystem::create_directories(outdir / "plots", ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + (outdir / "plots").string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    write_metrics_csv(r, outdir / "metrics.csv");
    written.push_back(outdir / "metrics.csv");
    write_improvements_csv(r, outdir / "improvements.csv");
    written.push_back(outdir / "improvements.csv");
    {
        std::ofstream out(outdir / "report.json", std::ios::binary);
        if (!out) throw Error(Errc::IoError, "cannot write report.json");
        out << to_json(r).dump(2) << '\n';
        written.push_back(outdir / "report.json");
    }
    for (const auto& t : r.traces) {
        const auto p = outdir / "plots" / (t.dataset + "_" + t.model + ".svg");
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
        out << prediction_plot(t);
        written.push_back(p);
    }
    return written;
}

}  // namespace pqos::eval
