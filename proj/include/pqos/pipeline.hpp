#pragma once

// Stage runner behind the command-line tool. Stages hand off through files
// under the work directory; each writes `<workdir>/<stage>/manifest.json`.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "pqos/align.hpp"
#include "pqos/csv.hpp"
#include "pqos/dataset_io.hpp"
#include "pqos/error.hpp"
#include "pqos/eval.hpp"
#include "pqos/featureset.hpp"
#include "pqos/models/model.hpp"
#include "pqos/stats.hpp"
#include "pqos/svg.hpp"
#include "pqos/synthgen.hpp"
#include "pqos/trace_store.hpp"
#include "pqos/workbench.hpp"

namespace pqos::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr std::string_view kToolName = "pqos";
inline constexpr std::string_view kToolVersion = "1.0.0";

enum class Stage { synth, ingest, analyze, align, build, train, evaluate, report, pipeline };

inline constexpr std::array<Stage, 8> kStageOrder = {Stage::synth, Stage::ingest,  Stage::analyze,  Stage::align,
                                                     Stage::build, Stage::train,   Stage::evaluate, Stage::report};

inline std::string to_string(Stage s) {
    switch (s) {
    case Stage::synth: return "synth";
    case Stage::ingest: return "ingest";
    case Stage::analyze: return "analyze";
    case Stage::align: return "align";
    case Stage::build: return "build";
    case Stage::train: return "train";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
    case Stage::pipeline: return "pipeline";
    }
    return "?";
}

inline std::optional<Stage> parse_stage(std::string_view s) {
    for (auto st : kStageOrder)
        if (to_string(st) == s) return st;
    if (s == "pipeline") return Stage::pipeline;
    return std::nullopt;
}

/// A failure inside a named stage (exit status 1).
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.code(), "stage " + stage + ": " + bare_message(cause)), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

private:
    static std::string bare_message(const Error& e) {
        std::string w = e.what();
        const std::string prefix = std::string(pqos::to_string(e.code())) + ": ";
        return w.starts_with(prefix) ? w.substr(prefix.size()) : w;
    }

    std::string stage_;
};

/// An invalid or unreadable configuration (exit status 2).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(Errc::InvalidConfig, what) {}
};

// --- hashing ------------------------------------------------------------------

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a(csv::slurp(p))); }

// --- configuration --------------------------------------------------------------

struct PipelineConfig {
    std::string input;  // empty: use the synth stage's traces
    std::string workdir = "work";
    std::string outdir = "out";
    std::string scenario = "A3D";  // preset name; empty disables filtering
    TraceConfig trace;
    double temporal_tolerance_s = 0.5;
    align::SpatialAlignSpec spatial;
    std::vector<std::string> datasets = {"EGF", "EGLT", "EGLT_Diff", "EGLS", "EGLS_Ratio"};
    std::vector<std::string> models = {"gbt", "conv", "recurrent"};
    eval::ModelConfigs model_configs;
    std::size_t n_runs = 50;
    std::uint64_t base_seed = 0;
    features::ScaleFit scale_fit = features::ScaleFit::full;
    double train_ratio = 0.8;
    double smape_eps = eval::kDefaultSmapeEps;
    bool prune = false;
    double prune_threshold = 0.7;
    std::string baseline = "EGF";
    std::size_t jobs = 0;  // 0: available execution units
    std::size_t acf_max_lag = 120;
    synth::SynthConfig synth;

    [[nodiscard]] fs::path work() const { return fs::path(workdir); }
    [[nodiscard]] fs::path stage_dir(Stage s) const {
        return work() / (s == Stage::build ? std::string("datasets") : to_string(s));
    }
    [[nodiscard]] fs::path traces_input() const {
        return input.empty() ? stage_dir(Stage::synth) / "traces.csv" : fs::path(input);
    }
    [[nodiscard]] std::size_t effective_jobs() const {
        if (jobs > 0) return jobs;
        return std::max(1u, std::thread::hardware_concurrency());
    }

    [[nodiscard]] std::vector<features::DatasetKind> dataset_kinds() const {
        std::vector<features::DatasetKind> out;
        for (const auto& d : datasets) {
            auto k = features::parse_dataset(d);
            if (!k) throw ConfigError("unknown dataset '" + d + "'");
            out.push_back(*k);
        }
        return out;
    }
    [[nodiscard]] std::vector<models::ModelKind> model_kinds() const {
        std::vector<models::ModelKind> out;
        for (const auto& m : models) {
            auto k = models::parse_model(m);
            if (!k) throw ConfigError("unknown model '" + m + "'");
            out.push_back(*k);
        }
        return out;
    }
    [[nodiscard]] std::optional<ScenarioFilter> scenario_filter() const {
        if (scenario.empty()) return std::nullopt;
        return trace.preset(scenario);
    }

    void validate() const {
        try {
            if (workdir.empty()) throw ConfigError("workdir must not be empty");
            if (outdir.empty()) throw ConfigError("outdir must not be empty");
            if (datasets.empty()) throw ConfigError("dataset list is empty");
            if (models.empty()) throw ConfigError("model list is empty");
            (void)dataset_kinds();
            const auto kinds = model_kinds();
            if (!features::parse_dataset(baseline)) throw ConfigError("unknown baseline dataset '" + baseline + "'");
            if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
            if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio must lie in (0, 1)");
            if (!(smape_eps > 0.0)) throw ConfigError("smape_eps must be positive");
            if (!(temporal_tolerance_s >= 0.0)) throw ConfigError("temporal_tolerance_s must be >= 0");
            if (!(prune_threshold > 0.0 && prune_threshold <= 1.0))
                throw ConfigError("prune_threshold must lie in (0, 1]");
            if (acf_max_lag < 1) throw ConfigError("acf_max_lag must be >= 1");
            spatial.validate();
            synth.validate();
            (void)scenario_filter();
            model_configs.gbt.validate();
            model_configs.conv.validate();
            model_configs.recurrent.validate();
            const bool conv = std::find(kinds.begin(), kinds.end(), models::ModelKind::conv) != kinds.end();
            const bool rec = std::find(kinds.begin(), kinds.end(), models::ModelKind::recurrent) != kinds.end();
            if (conv && rec && model_configs.conv.lookback != model_configs.recurrent.lookback)
                throw ConfigError("conv and recurrent models must share one lookback");
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
};

inline void to_json(json& j, const PipelineConfig& c) {
    json bins = json::array();
    for (const auto& b : c.spatial.bins) bins.push_back({b.begin_min, b.end_min});
    j = {{"input", c.input},
         {"workdir", c.workdir},
         {"outdir", c.outdir},
         {"scenario", c.scenario},
         {"trace", c.trace},
         {"align",
          {{"temporal_tolerance_s", c.temporal_tolerance_s},
           {"min_distance_m", c.spatial.min_distance_m},
           {"max_distance_m", c.spatial.max_distance_m},
           {"bins_min", bins}}},
         {"datasets", c.datasets},
         {"models", c.models},
         {"model_configs", c.model_configs},
         {"n_runs", c.n_runs},
         {"base_seed", c.base_seed},
         {"scale_fit", features::to_string(c.scale_fit)},
         {"train_ratio", c.train_ratio},
         {"smape_eps", c.smape_eps},
         {"prune", c.prune},
         {"prune_threshold", c.prune_threshold},
         {"baseline", c.baseline},
         {"jobs", c.jobs},
         {"acf_max_lag", c.acf_max_lag},
         {"synth", c.synth}};
}

inline void from_json(const json& j, PipelineConfig& c) {
    static const std::set<std::string> known = {
        "input",     "workdir",   "outdir",      "scenario",  "trace",           "align",    "datasets",
        "models",    "model_configs", "n_runs",  "base_seed", "scale_fit",       "train_ratio", "smape_eps",
        "prune",     "prune_threshold", "baseline", "jobs",   "acf_max_lag",     "synth"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!known.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    PipelineConfig d;
    c = d;
    try {
        c.input = j.value("input", d.input);
        c.workdir = j.value("workdir", d.workdir);
        c.outdir = j.value("outdir", d.outdir);
        c.scenario = j.value("scenario", d.scenario);
        if (j.contains("trace")) c.trace = j.at("trace").get<TraceConfig>();
        if (j.contains("align")) {
            const auto& a = j.at("align");
            c.temporal_tolerance_s = a.value("temporal_tolerance_s", d.temporal_tolerance_s);
            c.spatial.min_distance_m = a.value("min_distance_m", d.spatial.min_distance_m);
            c.spatial.max_distance_m = a.value("max_distance_m", d.spatial.max_distance_m);
            if (a.contains("bins_min")) {
                c.spatial.bins.clear();
                for (const auto& b : a.at("bins_min"))
                    c.spatial.bins.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
            }
        }
        c.datasets = j.value("datasets", d.datasets);
        c.models = j.value("models", d.models);
        if (j.contains("model_configs")) c.model_configs = j.at("model_configs").get<eval::ModelConfigs>();
        c.n_runs = j.value("n_runs", d.n_runs);
        c.base_seed = j.value("base_seed", d.base_seed);
        if (j.contains("scale_fit")) {
            auto f = features::parse_scale_fit(j.at("scale_fit").get<std::string>());
            if (!f) throw ConfigError("scale_fit must be 'full' or 'train'");
            c.scale_fit = *f;
        }
        c.train_ratio = j.value("train_ratio", d.train_ratio);
        c.smape_eps = j.value("smape_eps", d.smape_eps);
        c.prune = j.value("prune", d.prune);
        c.prune_threshold = j.value("prune_threshold", d.prune_threshold);
        c.baseline = j.value("baseline", d.baseline);
        c.jobs = j.value("jobs", d.jobs);
        c.acf_max_lag = j.value("acf_max_lag", d.acf_max_lag);
        if (j.contains("synth")) c.synth = j.at("synth").get<synth::SynthConfig>();
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

/// Reads a JSON config; `//` and `/* */` comments are accepted.
inline PipelineConfig load_config(const fs::path& p) {
    if (!fs::exists(p)) throw ConfigError("config file not found: " + p.string());
    json j;
    try {
        j = json::parse(csv::slurp(p), nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
    return j.get<PipelineConfig>();
}

inline std::string config_hash(const PipelineConfig& c) { return hex64(fnv1a(json(c).dump())); }

// --- manifests -------------------------------------------------------------------

struct Manifest {
    Stage stage = Stage::synth;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    json seeds = json::object();
    json summary = json::object();
};

inline json manifest_json(const Manifest& m, const PipelineConfig& cfg) {
    auto files = [](const std::vector<fs::path>& ps) {
        json a = json::array();
        for (const auto& p : ps) a.push_back({{"path", p.generic_string()}, {"fnv1a64", file_hash(p)}});
        return a;
    };
    return {{"stage", to_string(m.stage)},
            {"tool", kToolName},
            {"version", kToolVersion},
            {"config_hash", config_hash(cfg)},
            {"config", cfg},
            {"seeds", m.seeds},
            {"inputs", files(m.inputs)},
            {"outputs", files(m.outputs)},
            {"summary", m.summary}};
}

inline void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(Errc::IoError, "write failed for " + p.string());
}

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
    out << text;
}

inline void write_manifest(const Manifest& m, const PipelineConfig& cfg) {
    write_json(cfg.stage_dir(m.stage) / "manifest.json", manifest_json(m, cfg));
}

namespace detail {

inline void require_files(const std::vector<fs::path>& paths, const std::string& hint) {
    std::string missing;
    for (const auto& p : paths)
        if (!fs::exists(p)) missing += (missing.empty() ? "" : ", ") + p.generic_string();
    if (!missing.empty()) throw Error(Errc::FileNotFound, "missing " + missing + " (" + hint + ")");
}

/// Clears and recreates a stage's own output directory.
inline fs::path fresh_dir(const fs::path& dir) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());
    return dir;
}

struct IngestedTraces {
    TraceCollection traces;
    RoleMap roles;
};

inline IngestedTraces read_ingested(const PipelineConfig& cfg) {
    const auto dir = cfg.stage_dir(Stage::ingest);
    require_files({dir / "traces.csv", dir / "roles.json"}, "run the ingest stage first");
    IngestedTraces out{load_traces(dir / "traces.csv"), features::read_json_file(dir / "roles.json").get<RoleMap>()};
    return out;
}

inline AlignOptions align_options(const PipelineConfig& cfg) { return {cfg.temporal_tolerance_s, cfg.spatial}; }

inline void write_matrix_csv(const stats::PairwiseMatrix& m, const fs::path& p) {
    csv::Writer w(p);
    csv::Row header = {"ego_feature"};
    for (const auto& f : m.features) header.push_back("lead_" + f);
    w.row(header);
    for (std::size_t i = 0; i < m.features.size(); ++i) {
        csv::Row row = {m.features[i]};
        for (std::size_t j = 0; j < m.features.size(); ++j) {
            auto v = m.at(i, j);
            row.push_back(v ? csv::format_double(*v) : std::string{});
        }
        w.row(row);
    }
    w.close();
}

inline std::vector<std::string> pairwise_features() {
    std::vector<std::string> f = {"datarate"};
    for (auto n : kKpiNames) f.emplace_back(n);
    return f;
}

inline csv::Row pair_fields(const align::AlignedPair& p) {
    return {csv::format_double(p.ego.timestamp), csv::format_double(p.lead.timestamp), csv::format_double(p.delta_t),
            csv::format_double(p.delta_s), csv::format_double(p.delta_v)};
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, n));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    if (err) std::rethrow_exception(err);
}

}  // namespace detail

// --- stages -----------------------------------------------------------------------

inline Manifest run_synth(const PipelineConfig& cfg) {
    const auto dir = detail::fresh_dir(cfg.stage_dir(Stage::synth));
    auto out = synth::generate_traces(cfg.synth);
    write_traces(out.traces, dir / "traces.csv");
    write_json(dir / "truth.json", synth::truth_json(out, cfg.synth));
    spdlog::info("synth: {} samples in {} measurements", out.traces.size(), out.traces.measurement_ids().size());
    Manifest m{Stage::synth, {}, {dir / "traces.csv", dir / "truth.json"}, {{"synth_seed", cfg.synth.seed}}, {}};
    m.summary = {{"samples", out.traces.size()}, {"measurements", out.traces.measurement_ids().size()}};
    return m;
}

inline Manifest run_ingest(const PipelineConfig& cfg) {
    const auto src = cfg.traces_input();
    detail::require_files({src}, cfg.input.empty() ? "run the synth stage first or set input" : "input traces");
    RoleMap roles = cfg.trace.role_map;
    std::vector<fs::path> inputs = {src};
    if (roles.empty() && cfg.input.empty()) {
        const auto truth = cfg.stage_dir(Stage::synth) / "truth.json";
        detail::require_files({truth}, "synthetic role map");
        roles = features::read_json_file(truth).at("role_map").get<RoleMap>();
        inputs.push_back(truth);
    }
    if (roles.empty()) throw Error(Errc::AmbiguousRoles, "no role map configured (trace.role_map)");

    LoadOptions opts;
    opts.column_map = cfg.trace.column_map;
    auto all = load_traces(src, opts);
    const auto filter = cfg.scenario_filter();
    auto kept = filter ? filter_scenario(all, *filter) : all;
    if (kept.empty())
        throw Error(Errc::EmptyCollection, "scenario '" + cfg.scenario + "' (" + (filter ? filter->describe() : "") +
                                               ") selects no samples");

    const auto dir = detail::fresh_dir(cfg.stage_dir(Stage::ingest));
    write_traces(kept, dir / "traces.csv");
    write_json(dir / "roles.json", json(roles));
    spdlog::info("ingest: {} of {} samples kept, {} rejected rows", kept.size(), all.size(),
                 all.provenance().rejected_count);
    Manifest m{Stage::ingest, inputs, {dir / "traces.csv", dir / "roles.json"}, json::object(), {}};
    m.summary = {{"samples_read", all.size()},
                 {"samples_kept", kept.size()},
                 {"rejected_rows", all.provenance().rejected_count},
                 {"filter", kept.provenance().filter},
                 {"measurements", kept.measurement_ids()}};
    return m;
}

inline Manifest run_analyze(const PipelineConfig& cfg) {
    auto in = detail::read_ingested(cfg);
    const auto aligned = align_measurements(in.traces, in.roles, detail::align_options(cfg));
    if (aligned.ego.empty()) throw Error(Errc::AmbiguousRoles, "no measurement has a usable role assignment");
    const auto dir = detail::fresh_dir(cfg.stage_dir(Stage::analyze));
    std::vector<fs::path> outputs;
    json summary;

    // ego datarate autocorrelation, equal-weight mean over measurements
    std::vector<std::vector<double>> per_measurement;
    for (int mid : in.traces.measurement_ids()) {
        auto role = in.roles.lookup(mid);
        if (!role) continue;
        const auto* ego = in.traces.find(mid, role->ego);
        if (!ego || ego->size() < 3) continue;
        std::vector<double> rate;
        for (const auto& s : *ego) rate.push_back(s.datarate);
        try {
            per_measurement.push_back(stats::acf(rate, std::min(cfg.acf_max_lag, rate.size() - 1)));
        } catch (const Error& e) {
            spdlog::warn("analyze: acf of measurement {} skipped: {}", mid, e.what());
        }
    }
    if (!per_measurement.empty()) {
        std::size_t lags = per_measurement.front().size();
        for (const auto& v : per_measurement) lags = std::min(lags, v.size());
        std::vector<double> lag(lags), mean(lags, 0.0);
        for (std::size_t k = 0; k < lags; ++k) {
            lag[k] = static_cast<double>(k);
            for (const auto& v : per_measurement) mean[k] += v[k];
            mean[k] /= static_cast<double>(per_measurement.size());
        }
        csv::Writer w(dir / "acf.csv");
        w.row({"lag", "value"});
        for (std::size_t k = 0; k < lags; ++k) w.row({std::to_string(k), csv::format_double(mean[k])});
        w.close();
        write_text(dir / "acf.svg",
                   svg::line_chart("Ego datarate autocorrelation", "lag [samples]", "acf", lag, {{"acf", "#1f77b4", mean}}));
        outputs.push_back(dir / "acf.csv");
        outputs.push_back(dir / "acf.svg");
        auto cross = [&](double level) {
            auto c = stats::first_crossing(mean, level);
            return c ? json(*c) : json(nullptr);
        };
        summary["acf"] = {{"measurements", per_measurement.size()},
                          {"first_crossing_0.5", cross(0.5)},
                          {"first_crossing_1/e", cross(std::exp(-1.0))}};
    }

    // ego features ranked by correlation with the ego datarate
    const auto ranked = stats::cross_feature_corr(aligned.ego, "datarate");
    {
        csv::Writer w(dir / "cross_correlation.csv");
        w.row({"rank", "feature", "target", "coefficient", "n"});
        for (std::size_t i = 0; i < ranked.ranked.size(); ++i) {
            const auto& r = ranked.ranked[i];
            w.row({std::to_string(i + 1), r.feature_a, r.feature_b, csv::format_double(r.coefficient),
                   std::to_string(r.n_samples)});
        }
        w.close();
        outputs.push_back(dir / "cross_correlation.csv");
        json skipped = json::array();
        for (const auto& [f, why] : ranked.skipped) skipped.push_back({{"feature", f}, {"reason", why}});
        summary["cross_correlation"] = {
            {"top", ranked.ranked.empty() ? json(nullptr) : json(ranked.ranked.front().feature_a)},
            {"skipped", skipped}};
    }

    // ego/lead pairwise correlation, temporal pairs and each spatial bin
    const auto features = detail::pairwise_features();
    auto emit_matrix = [&](const std::string& stem, const std::string& title, const auto& sets) {
        if (sets.empty()) return;
        const auto mat = stats::pairwise_avg_corr(sets, features);
        detail::write_matrix_csv(mat, dir / (stem + ".csv"));
        std::vector<std::string> cols;
        for (const auto& f : features) cols.push_back("lead " + f);
        write_text(dir / (stem + ".svg"), svg::heatmap(title, features, cols, mat.values));
        outputs.push_back(dir / (stem + ".csv"));
        outputs.push_back(dir / (stem + ".svg"));
        summary["pairwise"][stem] = {{"measurements", sets.size()}};
    };
    std::map<int, std::vector<align::AlignedPair>> temporal;
    for (const auto& [mid, pairs] : aligned.temporal)
        if (pairs.size() >= 3) temporal[mid] = pairs;
    emit_matrix("pairwise_temporal", "Ego/lead correlation, time-aligned", temporal);
    for (std::size_t b = 0; b < cfg.spatial.bins.size(); ++b) {
        std::map<int, std::vector<align::AlignedPair>> sets;
        for (const auto& [mid, bins] : aligned.spatial)
            if (bins[b].pairs.size() >= 3) sets[mid] = bins[b].pairs;
        const auto& bin = cfg.spatial.bins[b];
        emit_matrix("pairwise_spatial_bin" + std::to_string(b),
                    "Ego/lead correlation, position-aligned, offset [" + svg::tick(bin.begin_min) + ", " +
                        svg::tick(bin.end_min) + ") min",
                    sets);
    }

    const auto ingest = cfg.stage_dir(Stage::ingest);
    spdlog::info("analyze: {} files written", outputs.size());
    return {Stage::analyze, {ingest / "traces.csv", ingest / "roles.json"}, outputs, json::object(), summary};
}

inline Manifest run_align(const PipelineConfig& cfg) {
    auto in = detail::read_ingested(cfg);
    const auto aligned = align_measurements(in.traces, in.roles, detail::align_options(cfg));
    if (aligned.temporal.empty()) throw Error(Errc::AmbiguousRoles, "no measurement has a usable role assignment");
    const auto dir = detail::fresh_dir(cfg.stage_dir(Stage::align));

    json per_measurement = json::array();
    {
        csv::Writer w(dir / "temporal_pairs.csv");
        w.row({"measurement_id", "ego_ts", "lead_ts", "delta_t", "delta_s", "delta_v"});
        for (const auto& [mid, pairs] : aligned.temporal) {
            for (const auto& p : pairs) {
                auto row = detail::pair_fields(p);
                row.insert(row.begin(), std::to_string(mid));
                w.row(row);
            }
        }
        w.close();
    }
    std::vector<std::size_t> bin_counts(cfg.spatial.bins.size(), 0);
    {
        csv::Writer w(dir / "spatial_pairs.csv");
        w.row({"measurement_id", "bin", "bin_begin_min", "bin_end_min", "ego_ts", "lead_ts", "delta_t", "delta_s",
               "delta_v"});
        for (const auto& [mid, bins] : aligned.spatial) {
            json counts = json::array();
            for (std::size_t b = 0; b < bins.size(); ++b) {
                for (const auto& p : bins[b].pairs) {
                    auto row = detail::pair_fields(p);
                    row.insert(row.begin(), {std::to_string(mid), std::to_string(b),
                                             csv::format_double(bins[b].bin.begin_min),
                                             csv::format_double(bins[b].bin.end_min)});
                    w.row(row);
                }
                bin_counts[b] += bins[b].pairs.size();
                counts.push_back(bins[b].pairs.size());
            }
            per_measurement.push_back(
                {{"measurement_id", mid}, {"temporal_pairs", aligned.temporal.at(mid).size()}, {"spatial_pairs", counts}});
        }
        w.close();
    }
    json bins = json::array();
    for (std::size_t b = 0; b < cfg.spatial.bins.size(); ++b)
        bins.push_back({{"begin_min", cfg.spatial.bins[b].begin_min},
                        {"end_min", cfg.spatial.bins[b].end_min},
                        {"pairs", bin_counts[b]}});
    std::size_t temporal_total = 0;
    for (const auto& [mid, pairs] : aligned.temporal) temporal_total += pairs.size();
    const json summary = {{"measurements", per_measurement},
                          {"temporal", {{"tolerance_s", cfg.temporal_tolerance_s},
                                        {"pairs", temporal_total},
                                        {"unmatched_ego", aligned.temporal_unmatched}}},
                          {"spatial",
                           {{"min_distance_m", cfg.spatial.min_distance_m},
                            {"max_distance_m", cfg.spatial.max_distance_m},
                            {"bins", bins}}},
                          {"ego_samples", aligned.ego.size()}};
    write_json(dir / "summary.json", summary);
    spdlog::info("align: {} temporal pairs, spatial bins {}", temporal_total, json(bin_counts).dump());
    const auto ingest = cfg.stage_dir(Stage::ingest);
    return {Stage::align,
            {ingest / "traces.csv", ingest / "roles.json"},
            {dir / "temporal_pairs.csv", dir / "spatial_pairs.csv", dir / "summary.json"},
            json::object(),
            summary};
}

/// Rebuilds the aligned sets from the align stage's pair files joined with
/// the ingested traces.
inline AlignedMeasurements read_alignment(const PipelineConfig& cfg) {
    auto in = detail::read_ingested(cfg);
    const auto dir = cfg.stage_dir(Stage::align);
    detail::require_files({dir / "temporal_pairs.csv", dir / "spatial_pairs.csv", dir / "summary.json"},
                          "run the align stage first");
    const auto summary = features::read_json_file(dir / "summary.json");
    std::vector<align::OffsetBin> bins;
    for (const auto& b : summary.at("spatial").at("bins"))
        bins.push_back({b.at("begin_min").get<double>(), b.at("end_min").get<double>()});

    AlignedMeasurements out;
    struct Series {
        std::map<double, const TraceSample*> ego, lead;
    };
    std::map<int, Series> index;
    for (const auto& m : summary.at("measurements")) {
        const int mid = m.at("measurement_id").get<int>();
        const auto role = in.roles.lookup(mid);
        if (!role) throw Error(Errc::AmbiguousRoles, "aligned measurement " + std::to_string(mid) + " has no role");
        const auto* ego = in.traces.find(mid, role->ego);
        const auto* lead = in.traces.find(mid, role->lead);
        if (!ego || !lead) throw Error(Errc::UnknownMeasurement, "measurement " + std::to_string(mid));
        auto& s = index[mid];
        for (const auto& x : *ego) s.ego[x.timestamp] = &x;
        for (const auto& x : *lead) s.lead[x.timestamp] = &x;
        out.ego.insert(out.ego.end(), ego->begin(), ego->end());
        out.temporal[mid];
        out.spatial[mid].clear();
        for (const auto& b : bins) out.spatial[mid].push_back({b, {}});
    }
    std::stable_sort(out.ego.begin(), out.ego.end(),
                     [](const TraceSample& a, const TraceSample& b) { return a.timestamp < b.timestamp; });
    out.temporal_unmatched = summary.at("temporal").at("unmatched_ego").get<std::size_t>();

    auto lookup = [&](const std::string& file, std::size_t line, int mid, double ego_ts, double lead_ts) {
        auto it = index.find(mid);
        if (it == index.end()) throw Error(Errc::UnknownMeasurement, file + " line " + std::to_string(line));
        auto e = it->second.ego.find(ego_ts);
        auto l = it->second.lead.find(lead_ts);
        if (e == it->second.ego.end() || l == it->second.lead.end())
            throw Error(Errc::SchemaMismatch, file + " line " + std::to_string(line) + " names an unknown sample");
        return align::make_pair(*e->second, *l->second);
    };
    auto num = [](const csv::Table& t, std::size_t r, std::size_t c, const std::string& file) {
        auto v = r < t.rows.size() && c < t.rows[r].size() ? csv::parse_double(t.rows[r][c]) : std::nullopt;
        if (!v) throw Error(Errc::ParseError, file + " line " + std::to_string(r + 2));
        return *v;
    };
    const auto temporal = csv::read_file(dir / "temporal_pairs.csv");
    for (std::size_t r = 0; r < temporal.rows.size(); ++r) {
        const int mid = static_cast<int>(num(temporal, r, 0, "temporal_pairs.csv"));
        out.temporal[mid].push_back(lookup("temporal_pairs.csv", r + 2, mid, num(temporal, r, 1, "temporal_pairs.csv"),
                                           num(temporal, r, 2, "temporal_pairs.csv")));
    }
    const auto spatial = csv::read_file(dir / "spatial_pairs.csv");
    for (std::size_t r = 0; r < spatial.rows.size(); ++r) {
        const int mid = static_cast<int>(num(spatial, r, 0, "spatial_pairs.csv"));
        const auto b = static_cast<std::size_t>(num(spatial, r, 1, "spatial_pairs.csv"));
        if (b >= bins.size()) throw Error(Errc::SchemaMismatch, "spatial_pairs.csv bin index out of range");
        out.spatial[mid][b].pairs.push_back(lookup("spatial_pairs.csv", r + 2, mid,
                                                   num(spatial, r, 4, "spatial_pairs.csv"),
                                                   num(spatial, r, 5, "spatial_pairs.csv")));
    }
    return out;
}

inline Manifest run_build(const PipelineConfig& cfg) {
    const auto aligned = read_alignment(cfg);
    const auto dir = detail::fresh_dir(cfg.stage_dir(Stage::build));
    const BuildOptions opts{cfg.scale_fit, cfg.train_ratio, cfg.prune, cfg.prune_threshold};
    Manifest m{Stage::build, {}, {}, json::object(), json::object()};
    for (auto kind : cfg.dataset_kinds()) {
        auto d = prepare_dataset(aligned, kind, opts);
        const json prov = {{"config_hash", config_hash(cfg)},
                           {"traces", (cfg.stage_dir(Stage::ingest) / "traces.csv").generic_string()},
                           {"alignment", cfg.stage_dir(Stage::align).generic_string()},
                           {"scale_fit", features::to_string(cfg.scale_fit)},
                           {"pruned", cfg.prune}};
        const auto split = features::split_point(d.rows(), cfg.train_ratio);
        auto files = features::write_dataset(d, dir, split, prov);
        m.outputs.push_back(files.csv);
        m.outputs.push_back(files.sidecar);
        m.summary[d.name] = {{"rows", d.rows()}, {"columns", d.n_features()}, {"split_index", split}};
        spdlog::info("build: {} with {} rows x {} features", d.name, d.rows(), d.n_features());
    }
    const auto ingest = cfg.stage_dir(Stage::ingest);
    const auto al = cfg.stage_dir(Stage::align);
    m.inputs = {ingest / "traces.csv", ingest / "roles.json", al / "temporal_pairs.csv", al / "spatial_pairs.csv",
                al / "summary.json"};
    return m;
}

/// Loads the built datasets named in the config; missing files are reported
/// together.
inline std::vector<features::FeatureDataset> read_built_datasets(const PipelineConfig& cfg,
                                                                 std::vector<fs::path>* inputs = nullptr) {
    const auto dir = cfg.stage_dir(Stage::build);
    std::vector<fs::path> files;
    for (auto k : cfg.dataset_kinds()) {
        auto f = features::dataset_files(dir, features::to_string(k));
        files.push_back(f.csv);
        files.push_back(f.sidecar);
    }
    detail::require_files(files, "run the build stage first");
    std::vector<features::FeatureDataset> out;
    for (auto k : cfg.dataset_kinds()) out.push_back(features::read_dataset(dir, features::to_string(k)).dataset);
    if (inputs) *inputs = files;
    return out;
}

inline Manifest run_train(const PipelineConfig& cfg) {
    Manifest m{Stage::train, {}, {}, {{"seed", cfg.base_seed}}, json::object()};
    const auto datasets = read_built_datasets(cfg, &m.inputs);
    const auto kinds = cfg.model_kinds();
    const auto dir = detail::fresh_dir(cfg.stage_dir(Stage::train));

    struct Task {
        std::size_t dataset;
        models::ModelKind kind;
    };
    std::vector<Task> tasks;
    for (std::size_t d = 0; d < datasets.size(); ++d)
        for (auto k : kinds) tasks.push_back({d, k});
    std::vector<json> results(tasks.size());
    detail::parallel_for(tasks.size(), cfg.effective_jobs(), [&](std::size_t i) {
        const auto& t = tasks[i];
        const auto& d = datasets[t.dataset];
        const auto split = features::temporal_split(d, cfg.train_ratio);
        models::TrainedModel model;
        double test_mae = 0.0;
        if (t.kind == models::ModelKind::gbt) {
            auto c = cfg.model_configs.gbt;
            c.seed = cfg.base_seed;
            model = models::train_gbt(split.train, c);
            test_mae = eval::mae(split.test.y, models::predict(model, split.test.X));
        } else {
            const std::size_t lookback = t.kind == models::ModelKind::conv ? cfg.model_configs.conv.lookback
                                                                           : cfg.model_configs.recurrent.lookback;
            const auto train_w = features::windowize(split.train, lookback);
            const auto test_w = features::windowize(split.test, lookback);
            if (t.kind == models::ModelKind::conv) {
                auto c = cfg.model_configs.conv;
                c.train.seed = cfg.base_seed;
                model = models::train_conv(train_w, c, d.columns);
            } else {
                auto c = cfg.model_configs.recurrent;
                c.train.seed = cfg.base_seed;
                model = models::train_recurrent(train_w, c, d.columns);
            }
            test_mae = eval::mae(test_w.targets, models::predict(model, test_w));
        }
        const auto path = dir / (d.name + "_" + models::to_string(t.kind) + ".json");
        write_text(path, models::serialize(model));
        results[i] = {{"dataset", d.name},
                      {"model", models::to_string(t.kind)},
                      {"file", path.generic_string()},
                      {"test_mae", test_mae},
                      {"final_loss", model.loss_trace.empty() ? json(nullptr) : json(model.loss_trace.back())}};
        spdlog::info("train: {}/{} test MAE {:.4f}", d.name, models::to_string(t.kind), test_mae);
    });
    m.summary["models"] = results;
    for (const auto& r : results) m.outputs.emplace_back(r.at("file").get<std::string>());
    return m;
}

inline Manifest run_evaluate(const PipelineConfig& cfg) {
    Manifest m{Stage::evaluate, {}, {}, json::object(), json::object()};
    const auto datasets = read_built_datasets(cfg, &m.inputs);
    eval::ExperimentOptions opts;
    opts.n_runs = cfg.n_runs;
    opts.base_seed = cfg.base_seed;
    opts.train_ratio = cfg.train_ratio;
    opts.smape_eps = cfg.smape_eps;
    opts.jobs = cfg.effective_jobs();
    opts.baseline = features::to_string(*features::parse_dataset(cfg.baseline));
    const auto report = eval::run_experiment(datasets, cfg.model_kinds(), cfg.model_configs, opts);
    const auto dir = detail::fresh_dir(cfg.stage_dir(Stage::evaluate));
    write_json(dir / "report.json", eval::to_json(report));
    m.outputs = {dir / "report.json"};
    m.seeds = {{"base_seed", cfg.base_seed}, {"n_runs", cfg.n_runs}, {"run_seed", "base_seed + run"}};
    std::size_t failed = 0;
    for (const auto& r : report.runs) failed += r.ok ? 0 : 1;
    m.summary = {{"runs", report.runs.size()}, {"failed_runs", failed}};
    spdlog::info("evaluate: {} runs, {} failed", report.runs.size(), failed);
    return m;
}

inline Manifest run_report(const PipelineConfig& cfg) {
    const auto src = cfg.stage_dir(Stage::evaluate) / "report.json";
    detail::require_files({src}, "run the evaluate stage first");
    const auto report = eval::report_from_json(features::read_json_file(src));
    const auto written = eval::emit_report(report, cfg.outdir);
    detail::fresh_dir(cfg.stage_dir(Stage::report));
    spdlog::info("report: {} files under {}", written.size(), cfg.outdir);
    return {Stage::report, {src}, written, json::object(), {{"outdir", cfg.outdir}}};
}

// --- dispatch ---------------------------------------------------------------------

/// Runs one stage and writes its manifest. Library errors become
/// StageError naming the stage.
inline Manifest run_stage(Stage s, const PipelineConfig& cfg) {
    const auto name = to_string(s);
    try {
        spdlog::debug("stage {} starting", name);
        Manifest m;
        switch (s) {
        case Stage::synth: m = run_synth(cfg); break;
        case Stage::ingest: m = run_ingest(cfg); break;
        case Stage::analyze: m = run_analyze(cfg); break;
        case Stage::align: m = run_align(cfg); break;
        case Stage::build: m = run_build(cfg); break;
        case Stage::train: m = run_train(cfg); break;
        case Stage::evaluate: m = run_evaluate(cfg); break;
        case Stage::report: m = run_report(cfg); break;
        case Stage::pipeline: throw Error(Errc::InvalidConfig, "pipeline is not a single stage");
        }
        write_manifest(m, cfg);
        return m;
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    } catch (const json::exception& e) {
        throw StageError(name, Error(Errc::ParseError, e.what()));
    } catch (const std::filesystem::filesystem_error& e) {
        throw StageError(name, Error(Errc::IoError, e.what()));
    }
}

/// All stages in order; synth is skipped when an input file is configured.
inline std::vector<Manifest> run_pipeline(const PipelineConfig& cfg) {
    std::vector<Manifest> out;
    for (auto s : kStageOrder) {
        if (s == Stage::synth && !cfg.input.empty()) continue;
        out.push_back(run_stage(s, cfg));
    }
    return out;
}

/// Machine-readable failure record written to `<workdir>/error.json`.
inline json error_record(const std::string& stage, const Error& e, int exit_status) {
    return {{"stage", stage},
            {"code", std::string(pqos::to_string(e.code()))},
            {"message", e.what()},
            {"exit_status", exit_status},
            {"tool", kToolName},
            {"version", kToolVersion}};
}

}  // namespace pqos::pipeline
