#pragma once

// Gradient-boosted regression trees with logistic loss over the four
// contextual feature columns. Exact greedy split search over presorted
// columns, second-order leaf values, and a learned default branch for
// missing values at every internal node.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrec/error.hpp"
#include "ctxrec/feature_engine.hpp"
#include "ctxrec/text.hpp"

namespace ctxrec::gbdt {

inline constexpr std::size_t kColumns = kNumFeatures;

struct FeatureRow {
    std::array<double, kColumns> values{};
    std::array<bool, kColumns> mask{true, true, true, true};
    int label = 0;
};

/// Raw feature values of a context vector; unavailable features are masked.
inline FeatureRow row_from_context(const ContextVector& cv, int label = 0) {
    FeatureRow r;
    for (auto f : kAllFeatures) {
        auto i = static_cast<std::size_t>(f);
        r.mask[i] = cv.available(f);
        r.values[i] = r.mask[i] ? cv.raw(f) : 0.0;
    }
    r.label = label;
    return r;
}

struct TreeNode {
    /// -1 for leaves.
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    /// Leaf reached by a row: values below the threshold go left, masked
    /// values follow the node's default branch.
    double output(const FeatureRow& row) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            auto f = static_cast<std::size_t>(n.feature);
            bool left = row.mask[f] ? row.values[f] < n.threshold : n.default_left;
            i = left ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].leaf_value;
    }

    std::size_t depth() const { return nodes.empty() ? 0 : depth_from(0); }

private:
    std::size_t depth_from(int i) const {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        if (n.is_leaf()) return 0;
        return 1 + std::max(depth_from(n.left), depth_from(n.right));
    }
};

struct GbdtConfig {
    std::size_t num_trees = 100;
    std::size_t max_depth = 3;
    double learning_rate = 0.1;
    std::size_t min_leaf_count = 20;
    double lambda = 1.0;

    void validate() const {
        if (num_trees < 1) throw UsageError("gbdt: num_trees must be >= 1");
        if (max_depth < 1) throw UsageError("gbdt: max_depth must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw UsageError("gbdt: learning rate must be in (0, 1]");
        if (min_leaf_count < 1) throw UsageError("gbdt: min_leaf_count must be >= 1");
        if (!(lambda >= 0.0)) throw UsageError("gbdt: lambda must be >= 0");
    }
};

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// Mean logistic loss from raw scores.
inline double logloss(std::span<const double> raw, std::span<const FeatureRow> rows) {
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double z = raw[i];
        double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        total += sp - (rows[i].label ? z : 0.0);
    }
    return total / static_cast<double>(rows.size());
}

inline double leaf_score(double g, double h, double lambda) {
    double d = h + lambda;
    return d > 0.0 ? g * g / d : 0.0;
}

}  // namespace detail

struct GbdtModel {
    double base_score = 0.0;
    double learning_rate = 0.1;
    std::vector<RegressionTree> trees;
    GbdtConfig config;

    double raw_score(const FeatureRow& row) const {
        double s = 0.0;
        for (const auto& t : trees) s += t.output(row);
        return base_score + learning_rate * s;
    }

    /// Probability in (0, 1); saturated values are pulled in by one ulp.
    double predict(const FeatureRow& row) const {
        double p = detail::sigmoid(raw_score(row));
        constexpr double lo = 1e-300;
        const double hi = std::nextafter(1.0, 0.0);
        return std::clamp(p, lo, hi);
    }
};

struct SplitChoice {
    double threshold = 0.0;
    double gain = 0.0;
    bool default_left = true;
};

/// Gain of splitting into (GL, HL) and (GR, HR).
inline double split_score(double gl, double hl, double gr, double hr, double lambda) {
    return detail::leaf_score(gl, hl, lambda) + detail::leaf_score(gr, hr, lambda) -
           detail::leaf_score(gl + gr, hl + hr, lambda);
}

/// Splits below this gain are treated as no improvement.
inline constexpr double kMinGain = 1e-12;

/// Best split of one node's sorted, fully-present column. Candidate
/// thresholds are midpoints between consecutive distinct values; ties keep
/// the lowest threshold. nullopt when no split has positive gain or every
/// positive-gain split leaves a side with fewer than `min_leaf_count` rows.
inline std::optional<SplitChoice> split_gain(std::span<const double> sorted_column, std::span<const double> gradients,
                                             std::span<const double> hessians, double lambda,
                                             std::size_t min_leaf_count = 1) {
    if (sorted_column.size() != gradients.size() || gradients.size() != hessians.size()) {
        throw UsageError("split_gain: length mismatch");
    }
    const std::size_t n = sorted_column.size();
    double g_total = std::accumulate(gradients.begin(), gradients.end(), 0.0);
    double h_total = std::accumulate(hessians.begin(), hessians.end(), 0.0);
    std::optional<SplitChoice> best;
    double gl = 0.0, hl = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        gl += gradients[i];
        hl += hessians[i];
        if (sorted_column[i + 1] == sorted_column[i]) continue;
        std::size_t left_n = i + 1;
        if (left_n < min_leaf_count || n - left_n < min_leaf_count) continue;
        double gain = split_score(gl, hl, g_total - gl, h_total - hl, lambda);
        if (gain > kMinGain && (!best || gain > best->gain)) {
            double thr = 0.5 * (sorted_column[i] + sorted_column[i + 1]);
            if (!(thr > sorted_column[i])) thr = sorted_column[i + 1];
            best = SplitChoice{thr, gain, true};
        }
    }
    return best;
}

struct FitResult {
    GbdtModel model;
    /// Train logloss of the base score alone.
    double initial_logloss = 0.0;
    /// Train logloss after each boosting iteration.
    std::vector<double> train_logloss;
};

namespace detail {

struct NodeStats {
    double g = 0.0, h = 0.0;
    std::size_t n = 0;
};

struct BestSplit {
    int feature = -1;
    SplitChoice choice;
};

/// Grows one tree on gradients/hessians. `sorted` holds, per column, the
/// indices of rows with that value present, ascending by value (stable).
inline RegressionTree grow_tree(std::span<const FeatureRow> rows, std::span<const double> grad,
                                std::span<const double> hess, const std::array<std::vector<std::uint32_t>, kColumns>& sorted,
                                const GbdtConfig& cfg) {
    const std::size_t n = rows.size();
    RegressionTree tree;
    tree.nodes.emplace_back();
    std::vector<int> node_of(n, 0);
    std::vector<int> frontier{0};

    for (std::size_t depth = 0; depth <= cfg.max_depth && !frontier.empty(); ++depth) {
        std::vector<int> slot(tree.nodes.size(), -1);
        for (std::size_t k = 0; k < frontier.size(); ++k) slot[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);

        std::vector<NodeStats> total(frontier.size());
        for (std::size_t r = 0; r < n; ++r) {
            int s = slot[static_cast<std::size_t>(node_of[r])];
            if (s < 0) continue;
            total[static_cast<std::size_t>(s)].g += grad[r];
            total[static_cast<std::size_t>(s)].h += hess[r];
            total[static_cast<std::size_t>(s)].n += 1;
        }

        std::vector<BestSplit> best(frontier.size());
        if (depth < cfg.max_depth) {
            for (std::size_t f = 0; f < kColumns; ++f) {
                std::vector<NodeStats> missing(frontier.size());
                for (std::size_t r = 0; r < n; ++r) {
                    if (rows[r].mask[f]) continue;
                    int s = slot[static_cast<std::size_t>(node_of[r])];
                    if (s < 0) continue;
                    auto& m = missing[static_cast<std::size_t>(s)];
                    m.g += grad[r];
                    m.h += hess[r];
                    m.n += 1;
                }
                std::vector<NodeStats> left(frontier.size());
                std::vector<double> last(frontier.size());
                std::vector<char> started(frontier.size(), 0);
                for (auto r : sorted[f]) {
                    int s = slot[static_cast<std::size_t>(node_of[r])];
                    if (s < 0) continue;
                    auto k = static_cast<std::size_t>(s);
                    double v = rows[r].values[f];
                    if (started[k] && v != last[k]) {
                        const auto& tot = total[k];
                        const auto& mis = missing[k];
                        const auto& lft = left[k];
                        double present_g = tot.g - mis.g, present_h = tot.h - mis.h;
                        std::size_t present_n = tot.n - mis.n;
                        double thr = 0.5 * (last[k] + v);
                        if (!(thr > last[k])) thr = v;
                        for (int dir = 0; dir < 2; ++dir) {
                            bool miss_left = dir == 0;
                            double gl = lft.g + (miss_left ? mis.g : 0.0);
                            double hl = lft.h + (miss_left ? mis.h : 0.0);
                            std::size_t nl = lft.n + (miss_left ? mis.n : 0);
                            double gr = present_g - lft.g + (miss_left ? 0.0 : mis.g);
                            double hr = present_h - lft.h + (miss_left ? 0.0 : mis.h);
                            std::size_t nr = present_n - lft.n + (miss_left ? 0 : mis.n);
                            if (nl < cfg.min_leaf_count || nr < cfg.min_leaf_count) continue;
                            double gain = split_score(gl, hl, gr, hr, cfg.lambda);
                            if (gain > kMinGain && (best[k].feature < 0 || gain > best[k].choice.gain)) {
                                best[k] = {static_cast<int>(f), {thr, gain, miss_left}};
                            }
                        }
                    }
                    left[k].g += grad[r];
                    left[k].h += hess[r];
                    left[k].n += 1;
                    last[k] = v;
                    started[k] = 1;
                }
            }
        }

        std::vector<int> next;
        for (std::size_t k = 0; k < frontier.size(); ++k) {
            auto id = static_cast<std::size_t>(frontier[k]);
            if (best[k].feature < 0) {
                double d = total[k].h + cfg.lambda;
                tree.nodes[id].leaf_value = d > 0.0 ? -total[k].g / d : 0.0;
                continue;
            }
            int l = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            auto& node = tree.nodes[id];
            node.feature = best[k].feature;
            node.threshold = best[k].choice.threshold;
            node.default_left = best[k].choice.default_left;
            node.left = l;
            node.right = l + 1;
            next.push_back(l);
            next.push_back(l + 1);
        }
        for (std::size_t r = 0; r < n; ++r) {
            const auto& node = tree.nodes[static_cast<std::size_t>(node_of[r])];
            if (node.is_leaf()) continue;
            auto f = static_cast<std::size_t>(node.feature);
            bool go_left = rows[r].mask[f] ? rows[r].values[f] < node.threshold : node.default_left;
            node_of[r] = go_left ? node.left : node.right;
        }
        frontier = std::move(next);
    }
    return tree;
}

}  // namespace detail

/// Boosts `config.num_trees` trees on logistic-loss gradients, starting from
/// the log-odds of the base rate.
inline FitResult fit(std::span<const FeatureRow> rows, const GbdtConfig& config) {
    config.validate();
    if (rows.empty()) throw DataError("gbdt: empty training set");
    std::size_t positives = 0;
    for (const auto& r : rows) {
        if (r.label != 0 && r.label != 1) throw DataError("gbdt: labels must be 0 or 1");
        positives += static_cast<std::size_t>(r.label);
        for (std::size_t f = 0; f < kColumns; ++f) {
            if (r.mask[f] && !std::isfinite(r.values[f])) throw DataError("gbdt: non-finite feature value");
        }
    }
    if (positives == 0 || positives == rows.size()) throw DataError("gbdt: labels must contain both classes");

    const std::size_t n = rows.size();
    double p = static_cast<double>(positives) / static_cast<double>(n);
    FitResult result;
    result.model.base_score = std::log(p / (1.0 - p));
    result.model.learning_rate = config.learning_rate;
    result.model.config = config;

    std::array<std::vector<std::uint32_t>, kColumns> sorted;
    for (std::size_t f = 0; f < kColumns; ++f) {
        for (std::size_t r = 0; r < n; ++r) {
            if (rows[r].mask[f]) sorted[f].push_back(static_cast<std::uint32_t>(r));
        }
        std::stable_sort(sorted[f].begin(), sorted[f].end(),
                         [&](std::uint32_t a, std::uint32_t b) { return rows[a].values[f] < rows[b].values[f]; });
    }

    std::vector<double> raw(n, result.model.base_score);
    std::vector<double> grad(n), hess(n);
    result.initial_logloss = detail::logloss(raw, rows);
    for (std::size_t m = 0; m < config.num_trees; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = detail::sigmoid(raw[i]);
            grad[i] = s - rows[i].label;
            hess[i] = s * (1.0 - s);
        }
        auto tree = detail::grow_tree(rows, grad, hess, sorted, config);
        for (std::size_t i = 0; i < n; ++i) raw[i] += config.learning_rate * tree.output(rows[i]);
        result.model.trees.push_back(std::move(tree));
        double ll = detail::logloss(raw, rows);
        if (!std::isfinite(ll)) throw NumericError("gbdt: non-finite train logloss");
        result.train_logloss.push_back(ll);
    }
    return result;
}

inline double predict(const GbdtModel& model, const FeatureRow& row) { return model.predict(row); }

// ---------------------------------------------------------------------------
// Model dump: preorder, one node per line, two-space indent per depth.
//
//   ctxrec-gbdt 1
//   base_score <v>
//   learning_rate <v>
//   max_depth <d>
//   trees <N>
//   tree 0
//   (feat,thr,L|R)
//     leaf(v)
//     leaf(v)
// ---------------------------------------------------------------------------

inline std::string dump(const GbdtModel& model) {
    std::string out = "ctxrec-gbdt 1\n";
    out += "base_score " + text::fmt17(model.base_score) + "\n";
    out += "learning_rate " + text::fmt17(model.learning_rate) + "\n";
    out += "max_depth " + std::to_string(model.config.max_depth) + "\n";
    out += "trees " + std::to_string(model.trees.size()) + "\n";
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        out += "tree " + std::to_string(t) + "\n";
        const auto& nodes = model.trees[t].nodes;
        auto emit = [&](auto&& self, int i, std::size_t depth) -> void {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            out.append(2 * depth, ' ');
            if (n.is_leaf()) {
                out += "leaf(" + text::fmt17(n.leaf_value) + ")\n";
                return;
            }
            out += "(" + std::to_string(n.feature) + "," + text::fmt17(n.threshold) + "," +
                   (n.default_left ? "L" : "R") + ")\n";
            self(self, n.left, depth + 1);
            self(self, n.right, depth + 1);
        };
        emit(emit, 0, 0);
    }
    return out;
}

inline GbdtModel load(std::string_view content) {
    std::vector<std::string_view> lines;
    text::for_each_line(content, [&](std::string_view l, std::size_t) {
        if (!text::trim(l).empty()) lines.push_back(text::trim(l));
    });
    std::size_t pos = 0;
    auto next = [&]() -> std::string_view {
        if (pos >= lines.size()) throw DataError("gbdt dump: unexpected end");
        return lines[pos++];
    };
    auto keyed = [&](std::string_view key) {
        auto l = next();
        if (l.rfind(key, 0) != 0) throw DataError("gbdt dump: expected '" + std::string(key) + "'");
        return text::trim(l.substr(key.size()));
    };
    auto real = [](std::string_view s) {
        auto v = text::parse_double(s);
        if (!v) throw DataError("gbdt dump: bad number '" + std::string(s) + "'");
        return *v;
    };
    if (next() != "ctxrec-gbdt 1") throw DataError("not a gbdt dump");
    GbdtModel model;
    model.base_score = real(keyed("base_score"));
    model.learning_rate = real(keyed("learning_rate"));
    model.config.learning_rate = model.learning_rate;
    auto depth = text::parse_int(keyed("max_depth"));
    auto count = text::parse_int(keyed("trees"));
    if (!depth || !count || *depth < 1 || *count < 0) throw DataError("gbdt dump: bad header");
    model.config.max_depth = static_cast<std::size_t>(*depth);
    model.config.num_trees = static_cast<std::size_t>(*count);
    for (std::int64_t t = 0; t < *count; ++t) {
        keyed("tree");
        RegressionTree tree;
        auto parse_node = [&](auto&& self) -> int {
            auto l = next();
            int id = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            if (l.rfind("leaf(", 0) == 0 && l.back() == ')') {
                tree.nodes.back().leaf_value = real(l.substr(5, l.size() - 6));
                return id;
            }
            if (l.front() != '(' || l.back() != ')') throw DataError("gbdt dump: bad node line");
            auto parts = text::split(l.substr(1, l.size() - 2), ',');
            if (parts.size() != 3) throw DataError("gbdt dump: bad split line");
            auto feat = text::parse_int(parts[0]);
            if (!feat || *feat < 0 || *feat >= static_cast<std::int64_t>(kColumns)) {
                throw DataError("gbdt dump: bad feature index");
            }
            TreeNode node;
            node.feature = static_cast<int>(*feat);
            node.threshold = real(parts[1]);
            node.default_left = parts[2] == "L";
            node.left = self(self);
            node.right = self(self);
            tree.nodes[static_cast<std::size_t>(id)] = node;
            return id;
        };
        parse_node(parse_node);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace ctxrec::gbdt
