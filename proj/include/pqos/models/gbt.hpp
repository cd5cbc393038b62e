#pragma once

// Least-squares gradient boosting over depth-limited regression trees.
// Trees are grown level by level with an exact greedy split search over
// pre-sorted feature columns.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "pqos/error.hpp"
#include "pqos/matrix.hpp"

namespace pqos::models {

struct GbtConfig {
    std::size_t n_trees = 200;
    std::size_t max_depth = 6;
    double learning_rate = 0.1;
    std::size_t min_samples_leaf = 5;
    double subsample_fraction = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees < 1) throw Error(Errc::InvalidConfig, "n_trees must be >= 1");
        if (max_depth < 1) throw Error(Errc::InvalidConfig, "max_depth must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0))
            throw Error(Errc::InvalidConfig, "learning_rate must lie in (0, 1]");
        if (min_samples_leaf < 1) throw Error(Errc::InvalidConfig, "min_samples_leaf must be >= 1");
        if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
            throw Error(Errc::InvalidConfig, "subsample_fraction must lie in (0, 1]");
    }
    bool operator==(const GbtConfig&) const = default;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // rows with x <= threshold go left
    int left = -1;
    int right = -1;
    double value = 0.0;
    bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    [[nodiscard]] double predict(std::span<const double> row) const {
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
    [[nodiscard]] std::size_t depth() const {
        std::vector<std::size_t> d(nodes.size(), 0);
        std::size_t best = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].feature >= 0) {
                d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
                d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
            }
            best = std::max(best, d[i]);
        }
        return best;
    }
    bool operator==(const RegressionTree&) const = default;
};

struct GbtModel {
    GbtConfig config;
    std::size_t n_features = 0;
    double base = 0.0;
    std::vector<RegressionTree> trees;
    std::vector<double> loss_trace;  // training MSE: initial, then after each stage
    bool degenerate_target = false;

    [[nodiscard]] double predict(std::span<const double> row) const {
        if (row.size() != n_features) throw Error(Errc::ShapeMismatch, "feature count does not match the model");
        double p = base;
        for (const auto& t : trees) p += config.learning_rate * t.predict(row);
        return p;
    }
    [[nodiscard]] std::vector<double> predict(const Matrix& X) const {
        if (X.cols != n_features) throw Error(Errc::ShapeMismatch, "feature count does not match the model");
        std::vector<double> out(X.rows);
        for (std::size_t r = 0; r < X.rows; ++r) out[r] = predict(X.row(r));
        return out;
    }
    bool operator==(const GbtModel&) const = default;
};

namespace detail {

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    std::size_t n_left = 0;
    double sum_left = 0.0;
};

/// Threshold strictly below `hi` and at least `lo`, so x <= t separates them.
inline double split_threshold(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    return mid < hi ? mid : lo;
}

/// Fits one tree to `residual` on the rows flagged in `in_sample`.
inline RegressionTree fit_tree(const Matrix& X, const std::vector<std::vector<std::uint32_t>>& sorted,
                               std::span<const double> residual, const std::vector<char>& in_sample,
                               const GbtConfig& cfg) {
    const std::size_t n = X.rows;
    RegressionTree tree;
    std::vector<int> node_of(n, -1);
    struct NodeStats {
        std::size_t count = 0;
        double sum = 0.0;
        double sum_sq = 0.0;
    };
    std::vector<NodeStats> stats(1);
    for (std::size_t r = 0; r < n; ++r) {
        if (!in_sample[r]) continue;
        node_of[r] = 0;
        ++stats[0].count;
        stats[0].sum += residual[r];
        stats[0].sum_sq += residual[r] * residual[r];
    }
    tree.nodes.push_back(TreeNode{});
    std::vector<int> frontier = {0};

    const std::size_t min_leaf = cfg.min_samples_leaf;
    for (std::size_t level = 0; level < cfg.max_depth && !frontier.empty(); ++level) {
        const std::size_t n_nodes = tree.nodes.size();
        std::vector<char> active(n_nodes, 0);
        for (int k : frontier)
            if (stats[static_cast<std::size_t>(k)].count >= 2 * min_leaf) active[static_cast<std::size_t>(k)] = 1;

        std::vector<SplitCandidate> best(n_nodes);
        std::vector<std::size_t> acc_n(n_nodes);
        std::vector<double> acc_s(n_nodes), last(n_nodes);
        std::vector<char> has_last(n_nodes);
        for (std::size_t f = 0; f < X.cols; ++f) {
            std::fill(acc_n.begin(), acc_n.end(), 0);
            std::fill(acc_s.begin(), acc_s.end(), 0.0);
            std::fill(has_last.begin(), has_last.end(), 0);
            for (std::uint32_t r : sorted[f]) {
                const int k = node_of[r];
                if (k < 0 || !active[static_cast<std::size_t>(k)]) continue;
                const auto ku = static_cast<std::size_t>(k);
                const double v = X(r, f);
                if (has_last[ku] && v > last[ku]) {
                    const std::size_t nl = acc_n[ku];
                    const std::size_t nr = stats[ku].count - nl;
                    if (nl >= min_leaf && nr >= min_leaf) {
                        const double sl = acc_s[ku];
                        const double sr = stats[ku].sum - sl;
                        const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                                            stats[ku].sum * stats[ku].sum / static_cast<double>(stats[ku].count);
                        if (gain > best[ku].gain) best[ku] = {gain, static_cast<int>(f), split_threshold(last[ku], v), nl, sl};
                    }
                }
                acc_n[ku] += 1;
                acc_s[ku] += residual[r];
                last[ku] = v;
                has_last[ku] = 1;
            }
        }

        std::vector<int> next;
        for (int k : frontier) {
            const auto ku = static_cast<std::size_t>(k);
            // ignore gains at round-off level relative to the node's energy
            if (best[ku].feature < 0 || !(best[ku].gain > 1e-13 * stats[ku].sum_sq)) continue;
            const int l = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(TreeNode{});
            tree.nodes.push_back(TreeNode{});
            auto& node = tree.nodes[ku];
            node.feature = best[ku].feature;
            node.threshold = best[ku].threshold;
            node.left = l;
            node.right = l + 1;
            stats.resize(tree.nodes.size());
            next.push_back(l);
            next.push_back(l + 1);
        }
        if (next.empty()) break;
        stats.resize(tree.nodes.size());
        for (int k : next) stats[static_cast<std::size_t>(k)] = {};
        for (std::size_t r = 0; r < n; ++r) {
            const int k = node_of[r];
            if (k < 0) continue;
            const auto& node = tree.nodes[static_cast<std::size_t>(k)];
            if (node.feature < 0) continue;
            const int child = X(r, static_cast<std::size_t>(node.feature)) <= node.threshold ? node.left : node.right;
            node_of[r] = child;
            auto& s = stats[static_cast<std::size_t>(child)];
            ++s.count;
            s.sum += residual[r];
            s.sum_sq += residual[r] * residual[r];
        }
        frontier = std::move(next);
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k)
        if (tree.nodes[k].feature < 0 && stats[k].count > 0)
            tree.nodes[k].value = stats[k].sum / static_cast<double>(stats[k].count);
    return tree;
}

inline double mse(std::span<const double> y, std::span<const double> pred) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - pred[i]) * (y[i] - pred[i]);
    return s / static_cast<double>(y.size());
}

}  // namespace detail

/// Stage-wise boosting from the training-target mean. A zero-variance target
/// yields the constant mean model with `degenerate_target` set.
inline GbtModel train_gbt(const Matrix& X, std::span<const double> y, const GbtConfig& cfg) {
    cfg.validate();
    if (X.rows != y.size()) throw Error(Errc::ShapeMismatch, "row count differs from target length");
    if (X.rows < 2 * cfg.min_samples_leaf)
        throw Error(Errc::TooFewRows, "need at least 2 * min_samples_leaf training rows");
    const std::size_t n = X.rows;

    GbtModel m;
    m.config = cfg;
    m.n_features = X.cols;
    m.base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> pred(n, m.base);
    m.loss_trace.push_back(detail::mse(y, pred));
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) {
        m.degenerate_target = true;
        m.base = y[0];
        return m;
    }

    std::vector<std::vector<std::uint32_t>> sorted(X.cols);
    for (std::size_t f = 0; f < X.cols; ++f) {
        auto& idx = sorted[f];
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0u);
        std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<char> in_sample(n, 1);
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    const auto n_sample = std::max<std::size_t>(
        2 * cfg.min_samples_leaf, static_cast<std::size_t>(std::floor(cfg.subsample_fraction * static_cast<double>(n))));
    std::vector<double> residual(n);
    for (std::size_t t = 0; t < cfg.n_trees; ++t) {
        if (cfg.subsample_fraction < 1.0) {
            std::shuffle(perm.begin(), perm.end(), rng);
            std::fill(in_sample.begin(), in_sample.end(), 0);
            for (std::size_t i = 0; i < std::min(n, n_sample); ++i) in_sample[perm[i]] = 1;
        }
        for (std::size_t r = 0; r < n; ++r) residual[r] = y[r] - pred[r];
        auto tree = detail::fit_tree(X, sorted, residual, in_sample, cfg);
        for (std::size_t r = 0; r < n; ++r) pred[r] += cfg.learning_rate * tree.predict(X.row(r));
        m.trees.push_back(std::move(tree));
        m.loss_trace.push_back(detail::mse(y, pred));
    }
    return m;
}

// --- JSON ---------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const GbtConfig& c) {
    j = {{"n_trees", c.n_trees},
         {"max_depth", c.max_depth},
         {"learning_rate", c.learning_rate},
         {"min_samples_leaf", c.min_samples_leaf},
         {"subsample_fraction", c.subsample_fraction},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GbtConfig& c) {
    GbtConfig d;
    c.n_trees = j.value("n_trees", d.n_trees);
    c.max_depth = j.value("max_depth", d.max_depth);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.min_samples_leaf = j.value("min_samples_leaf", d.min_samples_leaf);
    c.subsample_fraction = j.value("subsample_fraction", d.subsample_fraction);
    c.seed = j.value("seed", d.seed);
}

inline void to_json(nlohmann::json& j, const RegressionTree& t) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : t.nodes) {
        feature.push_back(n.feature);
        left.push_back(n.left);
        right.push_back(n.right);
        threshold.push_back(n.threshold);
        value.push_back(n.value);
    }
    j = {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}};
}

inline void from_json(const nlohmann::json& j, RegressionTree& t) {
    const auto feature = j.at("feature").get<std::vector<int>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto value = j.at("value").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n)
        throw Error(Errc::ParseError, "tree arrays differ in length");
    t.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i]};
        if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                                left[i] >= static_cast<int>(n) || right[i] >= static_cast<int>(n)))
            throw Error(Errc::ParseError, "tree child index out of range");
    }
}

}  // namespace pqos::models
