#pragma once

// Offline ranking protocol: targets with impression or recent-queue
// negatives, 8:1:1 temporal split, per-target AUC / NDCG@k / Recall@k, and
// leakage-free evaluation of any Scorer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrec/core_data.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/feature_engine.hpp"
#include "ctxrec/random.hpp"
#include "ctxrec/rankers.hpp"
#include "ctxrec/text.hpp"

namespace ctxrec {

enum class TargetOrigin { Impression, RecentQueue };

struct EvalTarget {
    std::size_t id = 0;
    std::string user_id;
    Timestamp timestamp = 0;
    std::string positive;
    std::vector<std::string> negatives;
    TargetOrigin origin = TargetOrigin::Impression;
    /// Empty for recent-queue targets.
    std::string impression_id;
    /// Set when fewer negatives than requested were available.
    bool short_pool = false;

    bool operator==(const EvalTarget&) const = default;
};

struct SamplerStats {
    std::size_t no_unclicked = 0;
    std::size_t empty_pool = 0;
    std::size_t short_pool = 0;

    std::size_t dropped() const { return no_unclicked + empty_pool; }
};

/// One target per clicked item, negatives drawn from the unclicked items of
/// the same impression: `k` sampled uniformly without replacement, or all
/// of them when `k` is nullopt. Targets without unclicked items are dropped.
inline std::vector<EvalTarget> negatives_from_impression(const ImpressionGroup& group, std::optional<std::size_t> k,
                                                         Rng& rng, SamplerStats* stats = nullptr) {
    std::vector<EvalTarget> out;
    if (group.clicked.empty()) return out;
    std::set<std::string_view> clicked(group.clicked.begin(), group.clicked.end());
    std::vector<std::string> pool;
    for (const auto& item : group.shown) {
        if (!clicked.count(item)) pool.push_back(item);
    }
    for (const auto& pos : group.clicked) {
        if (pool.empty()) {
            if (stats) ++stats->no_unclicked;
            continue;
        }
        EvalTarget t;
        t.user_id = group.user_id;
        t.timestamp = group.timestamp;
        t.positive = pos;
        t.origin = TargetOrigin::Impression;
        t.impression_id = group.impression_id;
        t.negatives = k ? sample_without_replacement(pool, *k, rng) : pool;
        if (k && pool.size() < *k) {
            t.short_pool = true;
            if (stats) ++stats->short_pool;
        }
        out.push_back(std::move(t));
    }
    return out;
}

/// Clicks with timestamp in the open interval (t - window, t) by users
/// other than `user`, excluding `positive`; distinct items in ascending id
/// order. `clicks` must be time-sorted.
inline std::vector<std::string> recent_queue_pool(std::span<const Event> clicks, std::string_view user, Timestamp t,
                                                  std::string_view positive, Timestamp window = 600) {
    auto lo = std::upper_bound(clicks.begin(), clicks.end(), t - window,
                               [](Timestamp v, const Event& e) { return v < e.timestamp; });
    auto hi = std::lower_bound(clicks.begin(), clicks.end(), t,
                               [](const Event& e, Timestamp v) { return e.timestamp < v; });
    std::set<std::string_view> items;
    for (auto it = lo; it < hi; ++it) {
        if (it->action != Action::Click || it->user_id == user || it->item_id == positive) continue;
        items.insert(it->item_id);
    }
    return {items.begin(), items.end()};
}

/// Target for the click (user, positive, t) with `k` negatives sampled from
/// other users' clicks in the recent queue; nullopt when the pool is empty.
inline std::optional<EvalTarget> negatives_from_recent_queue(std::span<const Event> clicks, std::string_view user,
                                                             Timestamp t, std::string_view positive,
                                                             std::optional<std::size_t> k, Rng& rng,
                                                             Timestamp window = 600, SamplerStats* stats = nullptr) {
    auto pool = recent_queue_pool(clicks, user, t, positive, window);
    if (pool.empty()) {
        if (stats) ++stats->empty_pool;
        return std::nullopt;
    }
    EvalTarget target;
    target.user_id = std::string(user);
    target.timestamp = t;
    target.positive = std::string(positive);
    target.origin = TargetOrigin::RecentQueue;
    if (k && pool.size() < *k) {
        target.short_pool = true;
        if (stats) ++stats->short_pool;
    }
    target.negatives = k ? sample_without_replacement(pool, *k, rng) : std::move(pool);
    return target;
}

enum class NegativeScheme { Impression, RecentQueue };

inline std::string_view to_string(NegativeScheme s) {
    return s == NegativeScheme::Impression ? "impression" : "recent-queue";
}

/// Every target of a dataset with its full negative pool, ids assigned in
/// time order. Impression scheme: one per clicked item of each impression.
/// Recent-queue scheme: one per click event.
inline std::vector<EvalTarget> build_targets(const Dataset& ds, NegativeScheme scheme, SamplerStats* stats = nullptr,
                                             Timestamp window = 600) {
    std::vector<EvalTarget> targets;
    Rng unused(0);
    if (scheme == NegativeScheme::Impression) {
        if (!ds.impressions) throw DataError("impression negatives requested but the log has no impressions");
        for (const auto& g : *ds.impressions) {
            auto ts = negatives_from_impression(g, std::nullopt, unused, stats);
            for (auto& t : ts) targets.push_back(std::move(t));
        }
    } else {
        std::vector<Event> clicks;
        for (const auto& e : ds.events) {
            if (e.action == Action::Click) clicks.push_back(e);
        }
        for (const auto& c : clicks) {
            auto t = negatives_from_recent_queue(clicks, c.user_id, c.timestamp, c.item_id, std::nullopt, unused, window,
                                                 stats);
            if (t) targets.push_back(std::move(*t));
        }
    }
    std::stable_sort(targets.begin(), targets.end(),
                     [](const EvalTarget& a, const EvalTarget& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i].id = i;
    return targets;
}

/// Keeps `k` uniformly sampled negatives per target (all when fewer).
inline std::vector<EvalTarget> subsample_negatives(std::vector<EvalTarget> targets, std::size_t k, Rng& rng) {
    for (auto& t : targets) {
        if (t.negatives.size() < k) t.short_pool = true;
        t.negatives = sample_without_replacement(t.negatives, k, rng);
    }
    return targets;
}

// ---------------------------------------------------------------------------
// Temporal split
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;

    void validate() const {
        if (!(train > 0 && val > 0 && test > 0) || std::abs(train + val + test - 1.0) > 1e-9) {
            throw UsageError("split fractions must be positive and sum to 1");
        }
    }
};

struct Splits {
    std::vector<EvalTarget> train;
    std::vector<EvalTarget> val;
    std::vector<EvalTarget> test;
};

/// Stable time sort, then contiguous slices by count. A boundary never
/// separates equal timestamps: ties stay in the earlier split.
inline Splits temporal_split(std::vector<EvalTarget> targets, const SplitSpec& spec = {}) {
    spec.validate();
    if (targets.size() < 10) throw DataError("temporal split needs at least 10 targets");
    std::stable_sort(targets.begin(), targets.end(),
                     [](const EvalTarget& a, const EvalTarget& b) { return a.timestamp < b.timestamp; });
    const std::size_t n = targets.size();
    auto cut = [&](double frac, std::size_t at_least) {
        auto c = static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
        c = std::max(c, at_least);
        while (c > 0 && c < n && targets[c].timestamp == targets[c - 1].timestamp) ++c;
        return std::min(c, n);
    };
    std::size_t c1 = cut(spec.train, 0);
    std::size_t c2 = cut(spec.train + spec.val, c1);
    Splits s;
    s.train.assign(std::make_move_iterator(targets.begin()), std::make_move_iterator(targets.begin() + c1));
    s.val.assign(std::make_move_iterator(targets.begin() + c1), std::make_move_iterator(targets.begin() + c2));
    s.test.assign(std::make_move_iterator(targets.begin() + c2), std::make_move_iterator(targets.end()));
    return s;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Fraction of correctly ordered positive/negative pairs; ties count half.
inline double auc(std::span<const double> logits, std::span<const int> labels) {
    if (logits.size() != labels.size()) throw UsageError("auc: size mismatch");
    double credit = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < logits.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (logits[i] > logits[j]) {
                credit += 1.0;
            } else if (logits[i] == logits[j]) {
                credit += 0.5;
            }
        }
    }
    if (pairs == 0) throw DataError("auc: target needs at least one positive and one negative");
    return credit / static_cast<double>(pairs);
}

/// Binary-gain NDCG over labels already in ranked order.
inline double ndcg_at_k(std::span<const int> ranked_labels, std::size_t k) {
    double dcg = 0.0;
    std::size_t positives = 0;
    for (std::size_t r = 0; r < ranked_labels.size(); ++r) {
        if (!ranked_labels[r]) continue;
        ++positives;
        if (r < k) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    if (positives == 0) throw DataError("ndcg: target has no positive");
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(positives, k); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

inline double recall_at_k(std::span<const int> ranked_labels, std::size_t k) {
    std::size_t positives = 0, hits = 0;
    for (std::size_t r = 0; r < ranked_labels.size(); ++r) {
        if (!ranked_labels[r]) continue;
        ++positives;
        if (r < k) ++hits;
    }
    if (positives == 0) throw DataError("recall: target has no positive");
    return static_cast<double>(hits) / static_cast<double>(positives);
}

struct TargetMetrics {
    double auc = 0.0;
    std::vector<double> ndcg;
    std::vector<double> recall;
};

/// Metrics of one candidate list; ranks break logit ties by item id.
inline TargetMetrics target_metrics(std::span<const std::string> items, std::span<const double> logits,
                                    std::span<const int> labels, std::span<const std::size_t> ks) {
    TargetMetrics m;
    m.auc = auc(logits, labels);
    auto order = rank_order(items, logits);
    std::vector<int> ranked(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) ranked[r] = labels[order[r]];
    for (auto k : ks) {
        m.ndcg.push_back(ndcg_at_k(ranked, k));
        m.recall.push_back(recall_at_k(ranked, k));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
    std::vector<std::size_t> ks{5, 10};
    bool keep_per_target = false;
};

struct PerTargetRow {
    std::size_t target_id = 0;
    TargetMetrics metrics;
};

struct EvalReport {
    std::string model;
    std::string split;
    std::vector<std::size_t> ks;
    std::size_t count = 0;
    std::size_t dropped = 0;
    double auc = 0.0;
    std::vector<double> ndcg;
    std::vector<double> recall;
    std::vector<PerTargetRow> per_target;

    double ndcg_at(std::size_t k) const { return ndcg.at(index_of(k)); }
    double recall_at(std::size_t k) const { return recall.at(index_of(k)); }

private:
    std::size_t index_of(std::size_t k) const {
        auto it = std::find(ks.begin(), ks.end(), k);
        if (it == ks.end()) throw UsageError("k=" + std::to_string(k) + " was not evaluated");
        return static_cast<std::size_t>(it - ks.begin());
    }
};

/// Candidate features per target: row 0 is the positive, then negatives.
using TargetFeatures = std::vector<std::vector<ContextVector>>;

/// One replay over the log answering every (candidate, target time) query.
inline TargetFeatures compute_target_features(const Dataset& ds, std::span<const EvalTarget> targets,
                                              const FeatureEngineConfig& config) {
    std::vector<FeatureQuery> queries;
    for (const auto& t : targets) {
        queries.push_back({t.positive, t.timestamp});
        for (const auto& n : t.negatives) queries.push_back({n, t.timestamp});
    }
    auto rows = compute_features(ds, queries, config);
    TargetFeatures out(targets.size());
    std::size_t i = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        out[t].assign(rows.begin() + static_cast<std::ptrdiff_t>(i),
                      rows.begin() + static_cast<std::ptrdiff_t>(i + 1 + targets[t].negatives.size()));
        i += 1 + targets[t].negatives.size();
    }
    return out;
}

/// Scores and measures every target using precomputed features.
inline EvalReport evaluate_with_features(const Scorer& scorer, std::span<const EvalTarget> targets,
                                         const TargetFeatures& features, const UserHistoryIndex& history,
                                         const EvalConfig& config = {}, std::size_t dropped = 0) {
    if (features.size() != targets.size()) throw UsageError("evaluate: feature rows do not match targets");
    EvalReport report;
    report.model = scorer.name();
    report.ks = config.ks;
    report.dropped = dropped;
    report.ndcg.assign(config.ks.size(), 0.0);
    report.recall.assign(config.ks.size(), 0.0);

    std::vector<std::string> items;
    std::vector<double> logits;
    std::vector<int> labels;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& target = targets[t];
        if (target.negatives.empty()) {
            ++report.dropped;
            continue;
        }
        items.assign(1, target.positive);
        items.insert(items.end(), target.negatives.begin(), target.negatives.end());
        labels.assign(items.size(), 0);
        labels[0] = 1;
        logits.resize(items.size());
        auto hist = history.before(target.user_id, target.timestamp);
        for (std::size_t c = 0; c < items.size(); ++c) {
            ScoreRequest req{hist, items[c], target.timestamp, &features[t][c], target.impression_id};
            try {
                logits[c] = scorer.score(req);
            } catch (const Error& e) {
                throw_error(e.kind(), "scoring target " + std::to_string(target.id) + " (user " + target.user_id +
                                          ", t=" + std::to_string(target.timestamp) + ", item " + items[c] +
                                          "): " + e.what());
            }
        }
        auto m = target_metrics(items, logits, labels, config.ks);
        report.auc += m.auc;
        for (std::size_t i = 0; i < config.ks.size(); ++i) {
            report.ndcg[i] += m.ndcg[i];
            report.recall[i] += m.recall[i];
        }
        ++report.count;
        if (config.keep_per_target) report.per_target.push_back({target.id, std::move(m)});
    }
    if (report.count > 0) {
        double n = static_cast<double>(report.count);
        report.auc /= n;
        for (auto& v : report.ndcg) v /= n;
        for (auto& v : report.recall) v /= n;
    }
    return report;
}

inline EvalReport evaluate(const Scorer& scorer, std::span<const EvalTarget> targets, const Dataset& ds,
                           const FeatureEngineConfig& engine, const EvalConfig& config = {}, std::size_t dropped = 0) {
    auto features = compute_target_features(ds, targets, engine);
    UserHistoryIndex history(ds);
    return evaluate_with_features(scorer, targets, features, history, config, dropped);
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

/// `key=value` lines: model, split, targets, dropped, then
/// `<metric>.mean/.count/.dropped` for auc and each ndcg@k / recall@k.
inline std::string format_report(const EvalReport& r) {
    std::string out;
    out += "model=" + r.model + "\n";
    if (!r.split.empty()) out += "split=" + r.split + "\n";
    out += "targets=" + std::to_string(r.count) + "\n";
    out += "dropped=" + std::to_string(r.dropped) + "\n";
    auto metric = [&](const std::string& name, double mean) {
        out += name + ".mean=" + text::fmt9(mean) + "\n";
        out += name + ".count=" + std::to_string(r.count) + "\n";
        out += name + ".dropped=" + std::to_string(r.dropped) + "\n";
    };
    metric("auc", r.auc);
    for (std::size_t i = 0; i < r.ks.size(); ++i) metric("ndcg@" + std::to_string(r.ks[i]), r.ndcg[i]);
    for (std::size_t i = 0; i < r.ks.size(); ++i) metric("recall@" + std::to_string(r.ks[i]), r.recall[i]);
    return out;
}

inline std::map<std::string, std::string> parse_report(std::string_view content) {
    std::map<std::string, std::string> kv;
    text::for_each_line(content, [&](std::string_view line, std::size_t) {
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') return;
        auto eq = t.find('=');
        if (eq == std::string_view::npos) throw DataError("malformed report line '" + std::string(t) + "'");
        kv[std::string(t.substr(0, eq))] = std::string(t.substr(eq + 1));
    });
    return kv;
}

/// `target_id,auc,ndcg@K,recall@K` with K = 10 when evaluated, else the largest k.
inline std::string format_per_target(const EvalReport& r) {
    if (r.ks.empty()) throw UsageError("per-target dump needs at least one k");
    auto it = std::find(r.ks.begin(), r.ks.end(), std::size_t{10});
    std::size_t idx = it != r.ks.end() ? static_cast<std::size_t>(it - r.ks.begin())
                                       : static_cast<std::size_t>(std::max_element(r.ks.begin(), r.ks.end()) - r.ks.begin());
    std::string k = std::to_string(r.ks[idx]);
    std::string out = "target_id,auc,ndcg@" + k + ",recall@" + k + "\n";
    for (const auto& row : r.per_target) {
        out += std::to_string(row.target_id) + "," + text::fmt9(row.metrics.auc) + "," +
               text::fmt9(row.metrics.ndcg[idx]) + "," + text::fmt9(row.metrics.recall[idx]) + "\n";
    }
    return out;
}

}  // namespace ctxrec
