// pqos: command-line entry point for the prediction workbench.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "pqos/pipeline.hpp"

namespace {

namespace pl = pqos::pipeline;

struct Overrides {
    std::string config;
    std::optional<std::string> input;
    std::optional<std::string> workdir;
    std::optional<std::string> outdir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::string> scale_fit;
    std::vector<std::string> datasets;
    std::vector<std::string> models;
    std::optional<std::size_t> runs;
};

void add_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON config file (comments allowed)");
    cmd->add_option("--input", o.input, "trace CSV to ingest instead of synthetic data");
    cmd->add_option("--workdir", o.workdir, "directory for stage artifacts");
    cmd->add_option("--outdir", o.outdir, "directory for the final report");
    cmd->add_option("--seed", o.seed, "base seed for training runs and the generator");
    cmd->add_option("--jobs", o.jobs, "parallel runs (default: available cores)")->check(CLI::PositiveNumber);
    cmd->add_option("--scale-fit", o.scale_fit, "fit min-max scaling on the full dataset or the train split")
        ->check(CLI::IsMember({"full", "train"}));
    cmd->add_option("--dataset", o.datasets, "dataset(s): egf, eglt, eglt-diff, egls, egls-ratio")->delimiter(',');
    cmd->add_option("--model", o.models, "model(s): gbt, conv, recurrent")->delimiter(',');
    cmd->add_option("--runs", o.runs, "runs per (dataset, model) cell")->check(CLI::PositiveNumber);
}

pl::PipelineConfig resolve(const Overrides& o) {
    pl::PipelineConfig cfg = o.config.empty() ? pl::PipelineConfig{} : pl::load_config(o.config);
    if (o.input) cfg.input = *o.input;
    if (o.workdir) cfg.workdir = *o.workdir;
    if (o.outdir) cfg.outdir = *o.outdir;
    if (o.seed) {
        cfg.base_seed = *o.seed;
        cfg.synth.seed = *o.seed;
    }
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.scale_fit) cfg.scale_fit = *pqos::features::parse_scale_fit(*o.scale_fit);
    if (!o.datasets.empty()) {
        cfg.datasets.clear();
        for (const auto& d : o.datasets) {
            auto k = pqos::features::parse_dataset(d);
            if (!k) throw pl::ConfigError("unknown dataset '" + d + "'");
            cfg.datasets.push_back(pqos::features::to_string(*k));
        }
    }
    if (!o.models.empty()) cfg.models = o.models;
    if (o.runs) cfg.n_runs = *o.runs;
    cfg.validate();
    return cfg;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("pqos");
    logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("PQOS_LOG")) {
        const auto l = spdlog::level::from_str(lvl);
        // from_str maps unknown names to off
        if (l == spdlog::level::off && std::string(lvl) != "off")
            spdlog::warn("PQOS_LOG='{}' not recognised; using info", lvl);
        else
            spdlog::set_level(l);
    }
}

int fail(const std::filesystem::path& workdir, const std::string& stage, const pqos::Error& e, int status) {
    spdlog::error("{}", e.what());
    std::error_code ec;
    std::filesystem::create_directories(workdir, ec);
    try {
        pl::write_json(workdir / "error.json", pl::error_record(stage, e, status));
    } catch (const pqos::Error& w) {
        spdlog::error("could not write error record: {}", w.what());
    }
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Predictive QoS workbench: traces to datarate forecasts"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(pl::kToolVersion));
    Overrides o;
    const std::vector<std::pair<pl::Stage, const char*>> commands = {
        {pl::Stage::synth, "generate synthetic ego/lead traces"},
        {pl::Stage::ingest, "load traces and apply the scenario filter"},
        {pl::Stage::analyze, "autocorrelation, cross- and pairwise correlation"},
        {pl::Stage::align, "temporal and spatial ego/lead pairing"},
        {pl::Stage::build, "feature datasets with scaling and split index"},
        {pl::Stage::train, "train one model per (dataset, model)"},
        {pl::Stage::evaluate, "repeated seeded runs on the test split"},
        {pl::Stage::report, "metrics tables and plots"},
        {pl::Stage::pipeline, "every stage in order"}};
    for (const auto& [stage, help] : commands) add_flags(app.add_subcommand(pl::to_string(stage), help), o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    pl::Stage stage = pl::Stage::pipeline;
    for (const auto& [s, help] : commands)
        if (app.got_subcommand(pl::to_string(s))) stage = s;

    pl::PipelineConfig cfg;
    try {
        cfg = resolve(o);
    } catch (const pqos::Error& e) {
        return fail(o.workdir.value_or(pl::PipelineConfig{}.workdir), "config", e, 2);
    }

    try {
        if (stage == pl::Stage::pipeline) {
            pl::run_pipeline(cfg);
        } else {
            pl::run_stage(stage, cfg);
        }
    } catch (const pl::StageError& e) {
        return fail(cfg.work(), e.stage(), e, 1);
    } catch (const pqos::Error& e) {
        return fail(cfg.work(), pl::to_string(stage), e, 1);
    } catch (const std::exception& e) {
        return fail(cfg.work(), pl::to_string(stage), pqos::Error(pqos::Errc::IoError, e.what()), 1);
    }
    std::error_code ec;
    std::filesystem::remove(cfg.work() / "error.json", ec);
    spdlog::info("{} done", pl::to_string(stage));
    return 0;
}
