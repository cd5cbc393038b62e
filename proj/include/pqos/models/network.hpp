#pragma once

// Shared machinery for the window-based networks: seeded initialisation,
// mini-batch training loop, optimisers and the finite-difference gradient check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pqos/error.hpp"
#include "pqos/featureset.hpp"

namespace pqos::models {

enum class Optimizer { sgd, adam };

inline std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

inline Optimizer parse_optimizer(const std::string& s) {
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adam") return Optimizer::adam;
    throw Error(Errc::InvalidConfig, "unknown optimizer '" + s + "'");
}

/// Training-loop settings shared by both network families.
struct TrainSettings {
    std::size_t epochs = 100;
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    Optimizer optimizer = Optimizer::sgd;
    /// Windows drawn (without replacement) per epoch; 0 uses every window.
    std::size_t epoch_sample = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be >= 1");
        if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw Error(Errc::InvalidConfig, "learning_rate must be positive");
    }
    bool operator==(const TrainSettings&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainSettings& s) {
    j = {{"epochs", s.epochs},       {"learning_rate", s.learning_rate}, {"batch_size", s.batch_size},
         {"optimizer", to_string(s.optimizer)}, {"epoch_sample", s.epoch_sample}, {"seed", s.seed}};
}

/// Reads settings, taking missing keys from `d`.
inline TrainSettings read_train_settings(const nlohmann::json& j, const TrainSettings& d) {
    TrainSettings s;
    s.epochs = j.value("epochs", d.epochs);
    s.learning_rate = j.value("learning_rate", d.learning_rate);
    s.batch_size = j.value("batch_size", d.batch_size);
    s.optimizer = parse_optimizer(j.value("optimizer", to_string(d.optimizer)));
    s.epoch_sample = j.value("epoch_sample", d.epoch_sample);
    s.seed = j.value("seed", d.seed);
    return s;
}

inline void from_json(const nlohmann::json& j, TrainSettings& s) { s = read_train_settings(j, TrainSettings{}); }

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline void init_uniform(std::span<double> w, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, fan_in)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w) v = dist(rng);
}

/// What the training loop needs from a network: a flat parameter vector, a
/// forward pass, and the per-window squared-error gradient.
template <typename Net>
concept WindowNetwork = requires(Net n, const Net cn, std::span<const double> window, std::span<double> grad) {
    { n.params() } -> std::same_as<std::vector<double>&>;
    { cn.forward(window) } -> std::convertible_to<double>;
    // adds d(scale * (f(window) - target)^2)/dtheta into grad, returns f(window)
    { cn.accumulate_gradient(window, 0.0, 1.0, grad) } -> std::convertible_to<double>;
    { cn.window_size() } -> std::convertible_to<std::size_t>;
};

template <WindowNetwork Net>
double batch_loss(const Net& net, const features::WindowSet& w, std::span<const std::size_t> idx) {
    double s = 0.0;
    for (std::size_t i : idx) {
        const double e = net.forward(w.window(i)) - w.targets[i];
        s += e * e;
    }
    return s / static_cast<double>(idx.size());
}

/// Mean squared error over the batch and its gradient.
template <WindowNetwork Net>
double batch_loss_gradient(const Net& net, const features::WindowSet& w, std::span<const std::size_t> idx,
                           std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double scale = 1.0 / static_cast<double>(idx.size());
    double s = 0.0;
    for (std::size_t i : idx) {
        const double p = net.accumulate_gradient(w.window(i), w.targets[i], scale, grad);
        s += (p - w.targets[i]) * (p - w.targets[i]);
    }
    return s * scale;
}

/// Mini-batch gradient descent. Returns the mean training loss of each epoch
/// (accumulated over that epoch's batches before each update).
template <WindowNetwork Net>
std::vector<double> train_network(Net& net, const features::WindowSet& w, const TrainSettings& s) {
    s.validate();
    if (w.size() == 0) throw Error(Errc::EmptyDataset, "no training windows");
    if (w.window_stride() != net.window_size()) throw Error(Errc::ShapeMismatch, "window shape does not match network");
    auto& theta = net.params();
    const std::size_t p = theta.size();
    std::vector<double> grad(p), m1(p, 0.0), m2(p, 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::uint64_t step = 0;

    std::mt19937_64 rng(s.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t per_epoch = s.epoch_sample == 0 ? w.size() : std::min(s.epoch_sample, w.size());

    std::vector<double> trace;
    trace.reserve(s.epochs);
    for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < per_epoch; b += s.batch_size) {
            const std::size_t e = std::min(per_epoch, b + s.batch_size);
            std::span<const std::size_t> idx(order.data() + b, e - b);
            const double loss = batch_loss_gradient(net, w, idx, grad);
            if (!std::isfinite(loss))
                throw Error(Errc::NonFiniteLoss, "loss became non-finite at epoch " + std::to_string(epoch + 1));
            epoch_loss += loss * static_cast<double>(e - b);
            ++step;
            if (s.optimizer == Optimizer::sgd) {
                for (std::size_t k = 0; k < p; ++k) theta[k] -= s.learning_rate * grad[k];
            } else {
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
                for (std::size_t k = 0; k < p; ++k) {
                    m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
                    m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
                    theta[k] -= s.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + adam_eps);
                }
            }
        }
        trace.push_back(epoch_loss / static_cast<double>(per_epoch));
    }
    return trace;
}

template <WindowNetwork Net>
std::vector<double> predict_windows(const Net& net, const features::WindowSet& w) {
    if (w.window_stride() != net.window_size()) throw Error(Errc::ShapeMismatch, "window shape does not match network");
    std::vector<double> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = net.forward(w.window(i));
    return out;
}

/// Max over parameters of |g_analytic - g_fd| / max(|g_analytic|, |g_fd|, 1e-8),
/// with central differences of the batch mean squared error.
template <WindowNetwork Net>
double grad_check(const Net& net, const features::WindowSet& w, double epsilon = 1e-5) {
    std::vector<std::size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Net probe = net;
    std::vector<double> analytic(probe.params().size());
    batch_loss_gradient(probe, w, idx, analytic);
    double worst = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double orig = probe.params()[k];
        probe.params()[k] = orig + epsilon;
        const double up = batch_loss(probe, w, idx);
        probe.params()[k] = orig - epsilon;
        const double down = batch_loss(probe, w, idx);
        probe.params()[k] = orig;
        const double fd = (up - down) / (2.0 * epsilon);
        const double denom = std::max({std::abs(analytic[k]), std::abs(fd), 1e-8});
        worst = std::max(worst, std::abs(analytic[k] - fd) / denom);
    }
    return worst;
}

// --- weight blobs -----------------------------------------------------------------

namespace detail {

inline constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(std::span<const unsigned char> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (s.size() % 4 != 0) throw Error(Errc::ParseError, "base64 length is not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int q[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            if (s[i + k] == '=') {
                q[k] = 0;
                ++pad;
            } else {
                q[k] = val(s[i + k]);
                if (q[k] < 0 || pad) throw Error(Errc::ParseError, "invalid base64 character");
            }
        }
        const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
        out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xFF));
    }
    return out;
}

}  // namespace detail

/// Little-endian IEEE-754 doubles, base64 encoded.
inline std::string encode_weights(std::span<const double> w) {
    std::vector<unsigned char> bytes(w.size() * 8);
    for (std::size_t i = 0; i < w.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &w[i], 8);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
    }
    return detail::base64_encode(bytes);
}

inline std::vector<double> decode_weights(const std::string& blob) {
    const auto bytes = detail::base64_decode(blob);
    if (bytes.size() % 8 != 0) throw Error(Errc::ParseError, "weight blob is not a whole number of doubles");
    std::vector<double> w(bytes.size() / 8);
    for (std::size_t i = 0; i < w.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
        std::memcpy(&w[i], &bits, 8);
    }
    return w;
}

}  // namespace pqos::models
