#pragma once

// Kind-tagged trained model with versioned JSON serialization.

#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pqos/error.hpp"
#include "pqos/featureset.hpp"
#include "pqos/models/conv.hpp"
#include "pqos/models/gbt.hpp"
#include "pqos/models/recurrent.hpp"

namespace pqos::models {

enum class ModelKind { gbt, conv, recurrent };

inline constexpr std::array<ModelKind, 3> kAllModels = {ModelKind::gbt, ModelKind::conv, ModelKind::recurrent};

inline std::string to_string(ModelKind k) {
    switch (k) {
    case ModelKind::gbt: return "gbt";
    case ModelKind::conv: return "conv";
    case ModelKind::recurrent: return "recurrent";
    }
    return "?";
}

inline std::optional<ModelKind> parse_model(std::string_view s) {
    for (auto k : kAllModels)
        if (to_string(k) == s) return k;
    return std::nullopt;
}

inline bool is_sequence_model(ModelKind k) { return k != ModelKind::gbt; }

inline constexpr int kModelFormatVersion = 1;

struct TrainedModel {
    std::variant<GbtModel, ConvNet, RecurrentNet> impl;
    std::vector<std::string> feature_names;
    std::vector<double> loss_trace;

    [[nodiscard]] ModelKind kind() const {
        switch (impl.index()) {
        case 0: return ModelKind::gbt;
        case 1: return ModelKind::conv;
        default: return ModelKind::recurrent;
        }
    }
    [[nodiscard]] std::uint64_t seed() const {
        if (auto* g = std::get_if<GbtModel>(&impl)) return g->config.seed;
        if (auto* c = std::get_if<ConvNet>(&impl)) return c->config().train.seed;
        return std::get<RecurrentNet>(impl).config().train.seed;
    }
};

inline TrainedModel train_gbt(const features::FeatureDataset& train, const GbtConfig& cfg) {
    TrainedModel m{train_gbt(train.X, train.y, cfg), train.columns, {}};
    m.loss_trace = std::get<GbtModel>(m.impl).loss_trace;
    return m;
}

inline TrainedModel train_conv(const features::WindowSet& windows, const ConvNetConfig& cfg,
                               std::vector<std::string> feature_names = {}) {
    if (windows.lookback != cfg.lookback) throw Error(Errc::ShapeMismatch, "window lookback differs from config");
    ConvNet net(cfg, windows.n_features);
    auto trace = train_network(net, windows, cfg.train);
    return {std::move(net), std::move(feature_names), std::move(trace)};
}

inline TrainedModel train_recurrent(const features::WindowSet& windows, const RecurrentConfig& cfg,
                                    std::vector<std::string> feature_names = {}) {
    if (windows.lookback != cfg.lookback) throw Error(Errc::ShapeMismatch, "window lookback differs from config");
    RecurrentNet net(cfg, windows.n_features);
    auto trace = train_network(net, windows, cfg.train);
    return {std::move(net), std::move(feature_names), std::move(trace)};
}

/// Tabular prediction (tree ensembles only).
inline std::vector<double> predict(const TrainedModel& m, const Matrix& rows) {
    const auto* g = std::get_if<GbtModel>(&m.impl);
    if (!g) throw Error(Errc::ShapeMismatch, to_string(m.kind()) + " model expects windows, not feature rows");
    return g->predict(rows);
}

/// Window prediction (sequence networks only).
inline std::vector<double> predict(const TrainedModel& m, const features::WindowSet& w) {
    if (auto* c = std::get_if<ConvNet>(&m.impl)) return predict_windows(*c, w);
    if (auto* r = std::get_if<RecurrentNet>(&m.impl)) return predict_windows(*r, w);
    throw Error(Errc::ShapeMismatch, "gbt model expects feature rows, not windows");
}

inline nlohmann::json to_json(const TrainedModel& m) {
    nlohmann::json j;
    j["format"] = "pqos-model";
    j["version"] = kModelFormatVersion;
    j["kind"] = to_string(m.kind());
    j["feature_names"] = m.feature_names;
    j["loss_trace"] = m.loss_trace;
    if (auto* g = std::get_if<GbtModel>(&m.impl)) {
        j["config"] = g->config;
        j["n_features"] = g->n_features;
        j["base"] = g->base;
        j["degenerate_target"] = g->degenerate_target;
        j["trees"] = g->trees;
        j["stage_mse"] = g->loss_trace;
    } else if (auto* c = std::get_if<ConvNet>(&m.impl)) {
        j["config"] = c->config();
        j["n_features"] = c->n_features();
        j["n_params"] = c->params().size();
        j["weights"] = encode_weights(c->params());
    } else {
        const auto& r = std::get<RecurrentNet>(m.impl);
        j["config"] = r.config();
        j["n_features"] = r.n_features();
        j["n_params"] = r.params().size();
        j["weights"] = encode_weights(r.params());
    }
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "pqos-model") throw Error(Errc::ParseError, "not a model file");
        if (j.at("version").get<int>() != kModelFormatVersion)
            throw Error(Errc::ParseError, "unsupported model format version");
        const auto kind = parse_model(j.at("kind").get<std::string>());
        if (!kind) throw Error(Errc::ParseError, "unknown model kind");
        TrainedModel m;
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.loss_trace = j.at("loss_trace").get<std::vector<double>>();
        const auto n_features = j.at("n_features").get<std::size_t>();
        switch (*kind) {
        case ModelKind::gbt: {
            GbtModel g;
            g.config = j.at("config").get<GbtConfig>();
            g.n_features = n_features;
            g.base = j.at("base").get<double>();
            g.degenerate_target = j.at("degenerate_target").get<bool>();
            g.trees = j.at("trees").get<std::vector<RegressionTree>>();
            g.loss_trace = j.at("stage_mse").get<std::vector<double>>();
            m.impl = std::move(g);
            break;
        }
        case ModelKind::conv:
            m.impl = ConvNet(j.at("config").get<ConvNetConfig>(), n_features,
                             decode_weights(j.at("weights").get<std::string>()));
            break;
        case ModelKind::recurrent:
            m.impl = RecurrentNet(j.at("config").get<RecurrentConfig>(), n_features,
                                  decode_weights(j.at("weights").get<std::string>()));
            break;
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, std::string("model file: ") + e.what());
    }
}

inline std::string serialize(const TrainedModel& m) { return to_json(m).dump(); }

inline TrainedModel deserialize(const std::string& text) {
    try {
        return model_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

}  // namespace pqos::models
