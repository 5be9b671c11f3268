#pragma once

// Synthetic impression logs with a known click model:
//   P(click) = sigmoid(intercept + b_ctr * latent_ctr
//                      + b_trend * ln(1 + trendiness(t))
//                      + b_fresh * ln(1 + freshness(t))
//                      + w_aff * <user, item> / sqrt(D))
// `latent_ctr` is a per-item attractiveness in [0, 1]; trendiness and
// freshness are the observed point-in-time features. Output is fully
// determined by the seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "ctxrec/core_data.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/feature_engine.hpp"
#include "ctxrec/random.hpp"
#include "ctxrec/text.hpp"

namespace ctxrec {

struct SyntheticConfig {
    std::size_t users = 5000;
    std::size_t items = 2000;
    Timestamp horizon = 7 * 86400;
    std::uint64_t seed = 7;
    std::size_t embedding_dim = 16;
    double impressions_per_user = 3.0;
    std::size_t impression_size = 15;
    /// Items are shown for this long after publication.
    Timestamp live_window = 2 * 86400;
    double intercept = 0.0;
    double beta_ctr = 4.0;
    double beta_trendiness = 0.0;
    double beta_freshness = 0.0;
    double affinity_weight = 0.5;
    double alpha = 0.001;

    void validate() const {
        if (users == 0 || items == 0) throw UsageError("synthetic: users and items must be >= 1");
        if (horizon <= 0 || live_window <= 0) throw UsageError("synthetic: horizon and live window must be positive");
        if (embedding_dim == 0 || impression_size < 2) throw UsageError("synthetic: bad embedding dim or impression size");
        if (!(impressions_per_user >= 1.0)) throw UsageError("synthetic: impressions_per_user must be >= 1");
    }
};

struct SyntheticData {
    Dataset dataset;
    std::vector<double> latent_ctr;
    std::string log;
    std::string catalog;
    std::string embeddings;
    std::string ground_truth;
};

namespace detail {
inline std::string padded(char prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
    return buf;
}
}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t d = cfg.embedding_dim;

    SyntheticData out;
    Dataset& ds = out.dataset;
    ds.embedding_dim = d;

    std::vector<std::string> item_ids(cfg.items);
    std::vector<std::vector<double>> item_vec(cfg.items, std::vector<double>(d));
    std::vector<Timestamp> publish(cfg.items);
    out.latent_ctr.resize(cfg.items);
    std::uniform_int_distribution<Timestamp> publish_dist(-cfg.live_window + 1, cfg.horizon - 1);
    for (std::size_t i = 0; i < cfg.items; ++i) {
        item_ids[i] = detail::padded('N', i, 6);
        out.latent_ctr[i] = unit(rng);
        publish[i] = publish_dist(rng);
        for (auto& x : item_vec[i]) x = normal(rng);
        ItemMeta meta;
        meta.item_id = item_ids[i];
        meta.publish_ts = publish[i];
        meta.category = "c" + std::to_string(i % 10);
        meta.embedding = item_vec[i];
        ds.catalog.emplace(item_ids[i], std::move(meta));
    }

    std::vector<std::vector<double>> user_vec(cfg.users, std::vector<double>(d));
    for (auto& u : user_vec) {
        for (auto& x : u) x = normal(rng);
    }

    struct Slot {
        Timestamp t;
        std::size_t user;
    };
    std::vector<Slot> slots;
    const double extra_mean = cfg.impressions_per_user - 1.0;
    std::poisson_distribution<int> extra(extra_mean > 0.0 ? extra_mean : 1.0);
    std::uniform_int_distribution<Timestamp> time_dist(0, cfg.horizon - 1);
    for (std::size_t u = 0; u < cfg.users; ++u) {
        int n = 1 + (extra_mean > 0.0 ? extra(rng) : 0);
        for (int k = 0; k < n; ++k) slots.push_back({time_dist(rng), u});
    }
    std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
        return a.t != b.t ? a.t < b.t : a.user < b.user;
    });

    std::vector<std::size_t> by_publish(cfg.items);
    for (std::size_t i = 0; i < cfg.items; ++i) by_publish[i] = i;
    std::sort(by_publish.begin(), by_publish.end(), [&](std::size_t a, std::size_t b) {
        return publish[a] != publish[b] ? publish[a] < publish[b] : a < b;
    });

    FeatureEngineConfig ecfg;
    ecfg.alpha = cfg.alpha;
    FeatureEngine engine(ecfg, ds.catalog);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    std::vector<Event> pending;  // events of the current timestamp, ingested once time advances
    std::size_t impression_counter = 0;
    for (const auto& slot : slots) {
        if (!pending.empty() && pending.front().timestamp < slot.t) {
            for (const auto& e : pending) engine.ingest(e);
            for (auto& e : pending) ds.events.push_back(std::move(e));
            pending.clear();
        }
        // Live items: publish time in (t - live_window, t].
        auto lo = std::upper_bound(by_publish.begin(), by_publish.end(), slot.t - cfg.live_window,
                                   [&](Timestamp v, std::size_t i) { return v < publish[i]; });
        auto hi = std::upper_bound(by_publish.begin(), by_publish.end(), slot.t,
                                   [&](Timestamp v, std::size_t i) { return v < publish[i]; });
        std::vector<std::size_t> live(lo, hi);
        if (live.size() < 2) continue;
        std::sort(live.begin(), live.end());
        auto shown = sample_without_replacement(live, cfg.impression_size, rng);
        std::shuffle(shown.begin(), shown.end(), rng);

        std::string imp_id = detail::padded('I', impression_counter++, 7);
        const std::string user_id = detail::padded('U', slot.user, 6);
        std::vector<std::size_t> clicked;
        for (auto i : shown) {
            auto cv = engine.query(item_ids[i], slot.t);
            double affinity = 0.0;
            for (std::size_t k = 0; k < d; ++k) affinity += user_vec[slot.user][k] * item_vec[i][k];
            affinity *= inv_sqrt_d;
            double z = cfg.intercept + cfg.beta_ctr * out.latent_ctr[i] +
                       cfg.beta_trendiness * std::log1p(cv.trendiness) +
                       cfg.beta_freshness * std::log1p(static_cast<double>(cv.freshness)) +
                       cfg.affinity_weight * affinity;
            double p = 1.0 / (1.0 + std::exp(-z));
            if (unit(rng) < p) clicked.push_back(i);
            pending.push_back({user_id, item_ids[i], slot.t, Action::Impression, imp_id});
        }
        for (auto i : clicked) pending.push_back({user_id, item_ids[i], slot.t, Action::Click, imp_id});
    }
    for (auto& e : pending) ds.events.push_back(std::move(e));

    ds.impressions = group_impressions(ds.events);

    out.log = serialize_event_log(ds.events);
    out.catalog = serialize_catalog(ds.catalog);
    out.embeddings = serialize_embeddings(ds.catalog, d);
    out.ground_truth = "intercept=" + text::fmt17(cfg.intercept) + "\n" + "beta_ctr=" + text::fmt17(cfg.beta_ctr) +
                       "\n" + "beta_trendiness=" + text::fmt17(cfg.beta_trendiness) + "\n" +
                       "beta_freshness=" + text::fmt17(cfg.beta_freshness) + "\n" +
                       "affinity_weight=" + text::fmt17(cfg.affinity_weight) + "\n" + "seed=" + std::to_string(cfg.seed) +
                       "\n";
    for (std::size_t i = 0; i < cfg.items; ++i) {
        out.ground_truth += "latent_ctr." + item_ids[i] + "=" + text::fmt17(out.latent_ctr[i]) + "\n";
    }
    return out;
}

}  // namespace ctxrec
