#pragma once

// Gated recurrent (LSTM) regressor: the cell is unrolled over the lookback
// window and the final hidden state feeds a linear scalar head. Gradients by
// backpropagation through time over the full window.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "pqos/error.hpp"
#include "pqos/models/network.hpp"

namespace pqos::models {

struct RecurrentConfig {
    std::size_t lookback = 60;
    std::size_t hidden_size = 6;
    double forget_bias = 1.0;
    bool zero_init = false;  // every parameter starts at 0
    TrainSettings train{100, 0.003, 32, Optimizer::adam, 256, 0};

    void validate() const {
        if (hidden_size < 1) throw Error(Errc::InvalidConfig, "hidden_size must be >= 1");
        train.validate();
    }
    bool operator==(const RecurrentConfig&) const = default;
};

class RecurrentNet {
public:
    RecurrentNet() = default;

    RecurrentNet(RecurrentConfig cfg, std::size_t n_features) : cfg_(std::move(cfg)), n_features_(n_features) {
        cfg_.validate();
        if (n_features_ < 1) throw Error(Errc::InvalidConfig, "network needs at least one input feature");
        layout();
        if (cfg_.zero_init) return;
        std::mt19937_64 rng(cfg_.train.seed);
        const std::size_t h = cfg_.hidden_size;
        const std::size_t in = n_features_ + h;
        init_uniform(std::span<double>(params_).subspan(0, 4 * h * in), in, rng);
        for (std::size_t j = 0; j < h; ++j) params_[b_ + h + j] = cfg_.forget_bias;
        init_uniform(std::span<double>(params_).subspan(out_w_, h), h, rng);
    }

    RecurrentNet(RecurrentConfig cfg, std::size_t n_features, std::vector<double> params)
        : cfg_(std::move(cfg)), n_features_(n_features) {
        cfg_.validate();
        layout();
        if (params.size() != params_.size()) throw Error(Errc::ShapeMismatch, "parameter count does not match config");
        params_ = std::move(params);
    }

    [[nodiscard]] const RecurrentConfig& config() const { return cfg_; }
    [[nodiscard]] std::size_t n_features() const { return n_features_; }
    std::vector<double>& params() { return params_; }
    [[nodiscard]] const std::vector<double>& params() const { return params_; }
    [[nodiscard]] std::size_t window_size() const { return steps() * n_features_; }

    [[nodiscard]] double forward(std::span<const double> window) const {
        Cache c;
        return run(window, c, false);
    }

    double accumulate_gradient(std::span<const double> window, double target, double scale,
                               std::span<double> grad) const {
        Cache c;
        const double pred = run(window, c, true);
        const std::size_t h = cfg_.hidden_size;
        const std::size_t in = n_features_ + h;
        const std::size_t T = steps();
        const double dout = 2.0 * scale * (pred - target);

        std::vector<double> dh(h), dc(h, 0.0), da(4 * h), dh_prev(h);
        const double* h_last = &c.h[(T - 1) * h];
        for (std::size_t j = 0; j < h; ++j) {
            grad[out_w_ + j] += dout * h_last[j];
            dh[j] = dout * params_[out_w_ + j];
        }
        grad[out_b_] += dout;

        for (std::size_t t = T; t-- > 0;) {
            const double* gi = &c.gates[t * 4 * h];
            const double* gf = gi + h;
            const double* go = gi + 2 * h;
            const double* gg = gi + 3 * h;
            const double* tc = &c.tanh_c[t * h];
            const double* c_prev = t > 0 ? &c.c[(t - 1) * h] : nullptr;
            for (std::size_t j = 0; j < h; ++j) {
                const double d_o = dh[j] * tc[j];
                dc[j] += dh[j] * go[j] * (1.0 - tc[j] * tc[j]);
                const double d_i = dc[j] * gg[j];
                const double d_g = dc[j] * gi[j];
                const double d_f = c_prev ? dc[j] * c_prev[j] : 0.0;
                da[j] = d_i * gi[j] * (1.0 - gi[j]);
                da[h + j] = d_f * gf[j] * (1.0 - gf[j]);
                da[2 * h + j] = d_o * go[j] * (1.0 - go[j]);
                da[3 * h + j] = d_g * (1.0 - gg[j] * gg[j]);
                dc[j] *= gf[j];
            }
            const double* x = window.data() + t * n_features_;
            const double* hp = t > 0 ? &c.h[(t - 1) * h] : nullptr;
            std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
            for (std::size_t r = 0; r < 4 * h; ++r) {
                const double d = da[r];
                if (d == 0.0) continue;
                grad[b_ + r] += d;
                const std::size_t row = r * in;
                for (std::size_t k = 0; k < n_features_; ++k) grad[row + k] += d * x[k];
                if (hp) {
                    for (std::size_t k = 0; k < h; ++k) {
                        grad[row + n_features_ + k] += d * hp[k];
                        dh_prev[k] += d * params_[row + n_features_ + k];
                    }
                }
            }
            dh.swap(dh_prev);
        }
        return pred;
    }

private:
    struct Cache {
        std::vector<double> gates;   // per step: i, f, o, g blocks
        std::vector<double> c;       // cell state per step
        std::vector<double> tanh_c;  // tanh(cell state) per step
        std::vector<double> h;       // hidden state per step
    };

    [[nodiscard]] std::size_t steps() const { return std::max<std::size_t>(1, cfg_.lookback); }

    void layout() {
        const std::size_t h = cfg_.hidden_size;
        const std::size_t in = n_features_ + h;
        b_ = 4 * h * in;
        out_w_ = b_ + 4 * h;
        out_b_ = out_w_ + h;
        params_.assign(out_b_ + 1, 0.0);
    }

    static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

    double run(std::span<const double> window, Cache& c, bool keep) const {
        if (window.size() != window_size()) throw Error(Errc::ShapeMismatch, "window size does not match network");
        const std::size_t h = cfg_.hidden_size;
        const std::size_t in = n_features_ + h;
        const std::size_t T = steps();
        const std::size_t keep_steps = keep ? T : 1;
        c.gates.assign(keep_steps * 4 * h, 0.0);
        c.c.assign(keep_steps * h, 0.0);
        c.tanh_c.assign(keep_steps * h, 0.0);
        c.h.assign(keep_steps * h, 0.0);
        std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0), a(4 * h);
        for (std::size_t t = 0; t < T; ++t) {
            const double* x = window.data() + t * n_features_;
            for (std::size_t r = 0; r < 4 * h; ++r) {
                const double* w = &params_[r * in];
                double z = params_[b_ + r];
                for (std::size_t k = 0; k < n_features_; ++k) z += w[k] * x[k];
                for (std::size_t k = 0; k < h; ++k) z += w[n_features_ + k] * h_prev[k];
                a[r] = z;
            }
            const std::size_t s = keep ? t : 0;
            double* g = &c.gates[s * 4 * h];
            for (std::size_t j = 0; j < h; ++j) {
                g[j] = sigmoid(a[j]);
                g[h + j] = sigmoid(a[h + j]);
                g[2 * h + j] = sigmoid(a[2 * h + j]);
                g[3 * h + j] = std::tanh(a[3 * h + j]);
                const double cell = g[h + j] * c_prev[j] + g[j] * g[3 * h + j];
                const double tc = std::tanh(cell);
                c.c[s * h + j] = cell;
                c.tanh_c[s * h + j] = tc;
                c.h[s * h + j] = g[2 * h + j] * tc;
            }
            std::copy(&c.c[s * h], &c.c[s * h] + h, c_prev.begin());
            std::copy(&c.h[s * h], &c.h[s * h] + h, h_prev.begin());
        }
        double y = params_[out_b_];
        for (std::size_t j = 0; j < h; ++j) y += params_[out_w_ + j] * h_prev[j];
        return y;
    }

    RecurrentConfig cfg_;
    std::size_t n_features_ = 0;
    std::vector<double> params_;
    std::size_t b_ = 0, out_w_ = 0, out_b_ = 0;
};

inline void to_json(nlohmann::json& j, const RecurrentConfig& c) {
    j = c.train;
    j["lookback"] = c.lookback;
    j["hidden_size"] = c.hidden_size;
    j["forget_bias"] = c.forget_bias;
    j["zero_init"] = c.zero_init;
}

inline void from_json(const nlohmann::json& j, RecurrentConfig& c) {
    RecurrentConfig d;
    c.train = read_train_settings(j, d.train);
    c.lookback = j.value("lookback", d.lookback);
    c.hidden_size = j.value("hidden_size", d.hidden_size);
    c.forget_bias = j.value("forget_bias", d.forget_bias);
    c.zero_init = j.value("zero_init", d.zero_init);
}

}  // namespace pqos::models
