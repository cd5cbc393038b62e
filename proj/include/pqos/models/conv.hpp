#pragma once

// One-dimensional convolutional regressor over lookback windows:
// stacked valid convolutions along time (tanh), global average pooling,
// optional tanh dense layer, linear scalar output.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "pqos/error.hpp"
#include "pqos/models/network.hpp"

namespace pqos::models {

struct ConvLayerSpec {
    std::size_t channels = 8;
    std::size_t kernel = 5;
    bool operator==(const ConvLayerSpec&) const = default;
};

struct ConvNetConfig {
    std::size_t lookback = 60;
    std::vector<ConvLayerSpec> conv_layers = {{8, 60}};
    std::size_t head_width = 8;
    bool zero_init_head = false;
    TrainSettings train{100, 0.001, 32, Optimizer::adam, 256, 0};

    void validate() const {
        std::size_t len = std::max<std::size_t>(1, lookback);
        for (const auto& l : conv_layers) {
            if (l.channels < 1 || l.kernel < 1) throw Error(Errc::InvalidConfig, "conv layer needs channels, kernel >= 1");
            if (l.kernel > len) throw Error(Errc::InvalidConfig, "kernel width exceeds the remaining sequence length");
            len = len - l.kernel + 1;
        }
        train.validate();
    }
    bool operator==(const ConvNetConfig&) const = default;
};

class ConvNet {
public:
    ConvNet() = default;

    ConvNet(ConvNetConfig cfg, std::size_t n_features) : cfg_(std::move(cfg)), n_features_(n_features) {
        cfg_.validate();
        if (n_features_ < 1) throw Error(Errc::InvalidConfig, "network needs at least one input feature");
        layout();
        std::mt19937_64 rng(cfg_.train.seed);
        std::size_t c_in = n_features_;
        for (std::size_t l = 0; l < cfg_.conv_layers.size(); ++l) {
            const auto& spec = cfg_.conv_layers[l];
            init_uniform(std::span<double>(params_).subspan(conv_w_[l], spec.channels * c_in * spec.kernel),
                         c_in * spec.kernel, rng);
            c_in = spec.channels;
        }
        const std::size_t pooled = pooled_width();
        if (cfg_.head_width > 0)
            init_uniform(std::span<double>(params_).subspan(head_w_, cfg_.head_width * pooled), pooled, rng);
        const std::size_t out_in = cfg_.head_width > 0 ? cfg_.head_width : pooled;
        if (!cfg_.zero_init_head) init_uniform(std::span<double>(params_).subspan(out_w_, out_in), out_in, rng);
    }

    /// Rebuilds a network around previously trained parameters.
    ConvNet(ConvNetConfig cfg, std::size_t n_features, std::vector<double> params)
        : cfg_(std::move(cfg)), n_features_(n_features) {
        cfg_.validate();
        layout();
        if (params.size() != params_.size()) throw Error(Errc::ShapeMismatch, "parameter count does not match config");
        params_ = std::move(params);
    }

    [[nodiscard]] const ConvNetConfig& config() const { return cfg_; }
    [[nodiscard]] std::size_t n_features() const { return n_features_; }
    std::vector<double>& params() { return params_; }
    [[nodiscard]] const std::vector<double>& params() const { return params_; }
    [[nodiscard]] std::size_t window_size() const { return steps() * n_features_; }

    [[nodiscard]] double forward(std::span<const double> window) const {
        Cache c;
        return run(window, c);
    }

    double accumulate_gradient(std::span<const double> window, double target, double scale,
                               std::span<double> grad) const {
        Cache c;
        const double pred = run(window, c);
        const double dout = 2.0 * scale * (pred - target);
        const std::size_t pooled = pooled_width();
        std::vector<double> dp(pooled, 0.0);
        if (cfg_.head_width > 0) {
            const std::size_t hw = cfg_.head_width;
            for (std::size_t j = 0; j < hw; ++j) {
                grad[out_w_ + j] += dout * c.hidden[j];
                const double dz = dout * params_[out_w_ + j] * (1.0 - c.hidden[j] * c.hidden[j]);
                grad[head_b_ + j] += dz;
                for (std::size_t k = 0; k < pooled; ++k) {
                    grad[head_w_ + j * pooled + k] += dz * c.pooled[k];
                    dp[k] += dz * params_[head_w_ + j * pooled + k];
                }
            }
        } else {
            for (std::size_t k = 0; k < pooled; ++k) {
                grad[out_w_ + k] += dout * c.pooled[k];
                dp[k] = dout * params_[out_w_ + k];
            }
        }
        grad[out_b_] += dout;

        const std::size_t n_layers = cfg_.conv_layers.size();
        if (n_layers == 0) return pred;
        // gradient w.r.t. last activation: pooling spreads evenly over time
        const std::size_t t_last = c.lengths.back();
        std::vector<double> da(t_last * pooled);
        for (std::size_t t = 0; t < t_last; ++t)
            for (std::size_t k = 0; k < pooled; ++k) da[t * pooled + k] = dp[k] / static_cast<double>(t_last);

        for (std::size_t l = n_layers; l-- > 0;) {
            const auto& spec = cfg_.conv_layers[l];
            const std::size_t c_out = spec.channels;
            const std::size_t c_in = l == 0 ? n_features_ : cfg_.conv_layers[l - 1].channels;
            const std::size_t t_out = c.lengths[l + 1];
            const std::size_t t_in = c.lengths[l];
            const std::vector<double>& a_out = c.acts[l + 1];
            const double* a_in = l == 0 ? window.data() : c.acts[l].data();
            std::vector<double> da_in(l == 0 ? 0 : t_in * c_in, 0.0);
            for (std::size_t t = 0; t < t_out; ++t) {
                for (std::size_t co = 0; co < c_out; ++co) {
                    const double a = a_out[t * c_out + co];
                    const double dz = da[t * c_out + co] * (1.0 - a * a);
                    if (dz == 0.0) continue;
                    grad[conv_b_[l] + co] += dz;
                    const std::size_t wbase = conv_w_[l] + co * c_in * spec.kernel;
                    for (std::size_t ci = 0; ci < c_in; ++ci) {
                        for (std::size_t k = 0; k < spec.kernel; ++k) {
                            grad[wbase + ci * spec.kernel + k] += dz * a_in[(t + k) * c_in + ci];
                            if (l > 0) da_in[(t + k) * c_in + ci] += dz * params_[wbase + ci * spec.kernel + k];
                        }
                    }
                }
            }
            da = std::move(da_in);
        }
        return pred;
    }

private:
    struct Cache {
        std::vector<std::vector<double>> acts;  // acts[l] = input of layer l, [t][c]; acts[0] unused
        std::vector<std::size_t> lengths;
        std::vector<double> pooled;
        std::vector<double> hidden;
    };

    [[nodiscard]] std::size_t steps() const { return std::max<std::size_t>(1, cfg_.lookback); }
    [[nodiscard]] std::size_t pooled_width() const {
        return cfg_.conv_layers.empty() ? n_features_ : cfg_.conv_layers.back().channels;
    }

    void layout() {
        std::size_t off = 0;
        std::size_t c_in = n_features_;
        conv_w_.clear();
        conv_b_.clear();
        for (const auto& spec : cfg_.conv_layers) {
            conv_w_.push_back(off);
            off += spec.channels * c_in * spec.kernel;
            conv_b_.push_back(off);
            off += spec.channels;
            c_in = spec.channels;
        }
        const std::size_t pooled = pooled_width();
        head_w_ = off;
        off += cfg_.head_width * pooled;
        head_b_ = off;
        off += cfg_.head_width;
        out_w_ = off;
        off += cfg_.head_width > 0 ? cfg_.head_width : pooled;
        out_b_ = off;
        off += 1;
        params_.assign(off, 0.0);
    }

    double run(std::span<const double> window, Cache& c) const {
        if (window.size() != window_size()) throw Error(Errc::ShapeMismatch, "window size does not match network");
        const std::size_t n_layers = cfg_.conv_layers.size();
        c.acts.assign(n_layers + 1, {});
        c.lengths.assign(n_layers + 1, 0);
        c.lengths[0] = steps();
        std::size_t c_in = n_features_;
        const double* in = window.data();
        for (std::size_t l = 0; l < n_layers; ++l) {
            const auto& spec = cfg_.conv_layers[l];
            const std::size_t t_out = c.lengths[l] - spec.kernel + 1;
            c.lengths[l + 1] = t_out;
            auto& out = c.acts[l + 1];
            out.assign(t_out * spec.channels, 0.0);
            for (std::size_t t = 0; t < t_out; ++t) {
                for (std::size_t co = 0; co < spec.channels; ++co) {
                    double z = params_[conv_b_[l] + co];
                    const std::size_t wbase = conv_w_[l] + co * c_in * spec.kernel;
                    for (std::size_t ci = 0; ci < c_in; ++ci)
                        for (std::size_t k = 0; k < spec.kernel; ++k)
                            z += params_[wbase + ci * spec.kernel + k] * in[(t + k) * c_in + ci];
                    out[t * spec.channels + co] = std::tanh(z);
                }
            }
            in = out.data();
            c_in = spec.channels;
        }
        const std::size_t t_last = c.lengths[n_layers];
        c.pooled.assign(c_in, 0.0);
        for (std::size_t t = 0; t < t_last; ++t)
            for (std::size_t k = 0; k < c_in; ++k) c.pooled[k] += in[t * c_in + k];
        for (auto& v : c.pooled) v /= static_cast<double>(t_last);

        double y = params_[out_b_];
        if (cfg_.head_width > 0) {
            c.hidden.assign(cfg_.head_width, 0.0);
            for (std::size_t j = 0; j < cfg_.head_width; ++j) {
                double z = params_[head_b_ + j];
                for (std::size_t k = 0; k < c_in; ++k) z += params_[head_w_ + j * c_in + k] * c.pooled[k];
                c.hidden[j] = std::tanh(z);
                y += params_[out_w_ + j] * c.hidden[j];
            }
        } else {
            for (std::size_t k = 0; k < c_in; ++k) y += params_[out_w_ + k] * c.pooled[k];
        }
        return y;
    }

    ConvNetConfig cfg_;
    std::size_t n_features_ = 0;
    std::vector<double> params_;
    std::vector<std::size_t> conv_w_, conv_b_;
    std::size_t head_w_ = 0, head_b_ = 0, out_w_ = 0, out_b_ = 0;
};

inline void to_json(nlohmann::json& j, const ConvNetConfig& c) {
    j = c.train;
    j["lookback"] = c.lookback;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : c.conv_layers) layers.push_back({l.channels, l.kernel});
    j["conv_layers"] = layers;
    j["head_width"] = c.head_width;
    j["zero_init_head"] = c.zero_init_head;
}

inline void from_json(const nlohmann::json& j, ConvNetConfig& c) {
    ConvNetConfig d;
    c.train = read_train_settings(j, d.train);
    c.lookback = j.value("lookback", d.lookback);
    if (j.contains("conv_layers")) {
        c.conv_layers.clear();
        for (const auto& l : j.at("conv_layers"))
            c.conv_layers.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>()});
    } else {
        c.conv_layers = d.conv_layers;
    }
    c.head_width = j.value("head_width", d.head_width);
    c.zero_init_head = j.value("zero_init_head", d.zero_init_head);
}

}  // namespace pqos::models
