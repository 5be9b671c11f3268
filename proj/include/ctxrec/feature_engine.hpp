#pragma once

// Point-in-time contextual features over a time-ordered event stream.
//
// Each item keeps click/impression counters and a lazily decayed
// trendiness accumulator: `trend_value` is the trendiness at `trend_ts`, and
// a later query multiplies it by exp(-alpha * (t - trend_ts)). Queries see
// only events with timestamp strictly before the query time.

#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctxrec/core_data.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/text.hpp"

namespace ctxrec {

enum class Feature : std::size_t { Ctr = 0, NumClicks = 1, Trendiness = 2, Freshness = 3 };
inline constexpr std::size_t kNumFeatures = 4;
inline constexpr std::array<Feature, kNumFeatures> kAllFeatures = {Feature::Ctr, Feature::NumClicks,
                                                                    Feature::Trendiness, Feature::Freshness};

inline std::string_view to_string(Feature f) {
    switch (f) {
        case Feature::Ctr: return "ctr";
        case Feature::NumClicks: return "numclicks";
        case Feature::Trendiness: return "trendiness";
        case Feature::Freshness: return "freshness";
    }
    return "?";
}

struct FeatureEngineConfig {
    /// Decay rate per second.
    double alpha = 0.001;
    double prior_clicks = 0.0;
    double prior_impressions = 0.0;
    bool strict_time = false;
    /// False for logs without impression records; CTR is then never available.
    bool impressions_available = true;

    void validate() const {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError("alpha must be positive and finite");
        if (!(prior_clicks >= 0.0) || !(prior_impressions >= prior_clicks) || !std::isfinite(prior_impressions)) {
            throw UsageError("ctr smoothing requires prior_impressions >= prior_clicks >= 0");
        }
    }

    bool operator==(const FeatureEngineConfig&) const = default;
};

struct ItemState {
    std::uint64_t clicks = 0;
    /// Clicks tied to an impression record; the CTR numerator.
    std::uint64_t linked_clicks = 0;
    std::uint64_t impressions = 0;
    double trend_value = 0.0;
    Timestamp trend_ts = 0;
    std::optional<Timestamp> publish_ts;

    bool operator==(const ItemState&) const = default;
};

struct ContextVector {
    double ctr = 0.0;
    std::uint64_t numclicks = 0;
    double trendiness = 0.0;
    std::int64_t freshness = 0;
    std::array<bool, kNumFeatures> mask{};

    bool available(Feature f) const { return mask[static_cast<std::size_t>(f)]; }

    double raw(Feature f) const {
        switch (f) {
            case Feature::Ctr: return ctr;
            case Feature::NumClicks: return static_cast<double>(numclicks);
            case Feature::Trendiness: return trendiness;
            case Feature::Freshness: return static_cast<double>(freshness);
        }
        return 0.0;
    }

    /// bit i set when feature i is available (ctr, numclicks, trendiness, freshness).
    unsigned mask_bits() const {
        unsigned bits = 0;
        for (std::size_t i = 0; i < kNumFeatures; ++i) bits |= mask[i] ? (1u << i) : 0u;
        return bits;
    }

    bool operator==(const ContextVector&) const = default;
};

namespace detail {
struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};
}  // namespace detail

class FeatureEngine {
public:
    explicit FeatureEngine(FeatureEngineConfig config = {}) : config_(config) { config_.validate(); }

    /// Registers every catalog item (publish times included). With
    /// strict_time, ingesting an item outside the catalog then throws.
    FeatureEngine(FeatureEngineConfig config, const Catalog& catalog) : FeatureEngine(config) {
        catalog_registered_ = true;
        items_.reserve(catalog.size());
        for (const auto& [id, meta] : catalog) {
            ItemState s;
            s.publish_ts = meta.publish_ts;
            items_.emplace(id, s);
        }
    }

    const FeatureEngineConfig& config() const { return config_; }
    std::optional<Timestamp> high_water_mark() const { return hwm_; }
    std::size_t item_count() const { return items_.size(); }

    const ItemState* state(std::string_view item) const {
        auto it = items_.find(item);
        return it == items_.end() ? nullptr : &it->second;
    }

    void set_publish_time(std::string_view item, std::optional<Timestamp> ts) { slot(item).publish_ts = ts; }

    void ingest(const Event& e) {
        if (hwm_ && e.timestamp < *hwm_ && config_.strict_time) {
            throw DataError("out-of-order event at t=" + std::to_string(e.timestamp) + " after t=" +
                            std::to_string(*hwm_));
        }
        auto it = items_.find(std::string_view(e.item_id));
        if (it == items_.end()) {
            if (config_.strict_time && catalog_registered_) throw DataError("unknown item '" + e.item_id + "'");
            it = items_.emplace(e.item_id, ItemState{}).first;
        }
        ItemState& s = it->second;
        if (e.action == Action::Impression) {
            ++s.impressions;
        } else {
            ++s.clicks;
            if (e.impression_id) ++s.linked_clicks;
            if (s.clicks == 1) {
                s.trend_value = 1.0;
                s.trend_ts = e.timestamp;
            } else if (e.timestamp >= s.trend_ts) {
                s.trend_value = s.trend_value * std::exp(-config_.alpha * static_cast<double>(e.timestamp - s.trend_ts)) + 1.0;
                s.trend_ts = e.timestamp;
            } else {
                // Late click (lenient mode only): decay its unit mass forward.
                s.trend_value += std::exp(-config_.alpha * static_cast<double>(s.trend_ts - e.timestamp));
            }
        }
        if (!hwm_ || e.timestamp > *hwm_) hwm_ = e.timestamp;
    }

    /// Features of `item` from events strictly before `t`.
    ContextVector query(std::string_view item, Timestamp t) const {
        if (config_.strict_time && hwm_ && t <= *hwm_) {
            throw DataError("query at t=" + std::to_string(t) + " would see events at t=" + std::to_string(*hwm_));
        }
        ContextVector cv;
        auto it = items_.find(item);
        if (it == items_.end()) {
            if (config_.strict_time && catalog_registered_) throw DataError("unknown item '" + std::string(item) + "'");
            return cv;
        }
        const ItemState& s = it->second;
        cv.numclicks = s.clicks;
        cv.mask[static_cast<std::size_t>(Feature::NumClicks)] = true;
        if (s.clicks > 0) {
            cv.trendiness = s.trend_value * std::exp(-config_.alpha * static_cast<double>(t - s.trend_ts));
        }
        cv.mask[static_cast<std::size_t>(Feature::Trendiness)] = true;

        double denom = static_cast<double>(s.impressions) + config_.prior_impressions;
        if (config_.impressions_available && denom > 0.0) {
            double num = static_cast<double>(s.linked_clicks) + config_.prior_clicks;
            cv.ctr = std::min(1.0, num / denom);
            cv.mask[static_cast<std::size_t>(Feature::Ctr)] = true;
        }
        if (s.publish_ts && *s.publish_ts <= t) {
            cv.freshness = t - *s.publish_ts;
            cv.mask[static_cast<std::size_t>(Feature::Freshness)] = true;
        }
        return cv;
    }

    // -----------------------------------------------------------------------
    // Snapshot: line-oriented text, doubles as hex floats so restore is exact.
    //
    //   ctxrec-feature-snapshot 1
    //   alpha <hex> / prior_clicks <hex> / prior_impressions <hex>
    //   impressions_available <0|1> / catalog_registered <0|1>
    //   high_water_mark <int|->
    //   items <N>
    //   <len>:<id> <clicks> <linked> <impressions> <trend hex> <trend_ts> <publish|->
    // -----------------------------------------------------------------------

    static constexpr int kSnapshotVersion = 1;

    std::string snapshot() const {
        std::string out = "ctxrec-feature-snapshot " + std::to_string(kSnapshotVersion) + "\n";
        out += "alpha " + hex(config_.alpha) + "\n";
        out += "prior_clicks " + hex(config_.prior_clicks) + "\n";
        out += "prior_impressions " + hex(config_.prior_impressions) + "\n";
        out += std::string("impressions_available ") + (config_.impressions_available ? "1" : "0") + "\n";
        out += std::string("catalog_registered ") + (catalog_registered_ ? "1" : "0") + "\n";
        out += "high_water_mark " + (hwm_ ? std::to_string(*hwm_) : std::string("-")) + "\n";
        std::vector<const std::pair<const std::string, ItemState>*> sorted;
        sorted.reserve(items_.size());
        for (const auto& kv : items_) sorted.push_back(&kv);
        std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
        out += "items " + std::to_string(sorted.size()) + "\n";
        for (const auto* kv : sorted) {
            const auto& s = kv->second;
            out += std::to_string(kv->first.size()) + ":" + kv->first + " " + std::to_string(s.clicks) + " " +
                   std::to_string(s.linked_clicks) + " " + std::to_string(s.impressions) + " " + hex(s.trend_value) +
                   " " + std::to_string(s.trend_ts) + " " +
                   (s.publish_ts ? std::to_string(*s.publish_ts) : std::string("-")) + "\n";
        }
        return out;
    }

    /// Rebuilds an engine from `snapshot()` output. Throws DataError when the
    /// blob's version or decay/smoothing configuration differs from `expected`.
    static FeatureEngine restore(std::string_view blob, const FeatureEngineConfig& expected) {
        Reader r{blob};
        if (r.word() != "ctxrec-feature-snapshot") throw DataError("not a feature-engine snapshot");
        if (r.integer() != kSnapshotVersion) throw DataError("unsupported snapshot version");
        FeatureEngineConfig cfg = expected;
        r.expect("alpha");
        cfg.alpha = r.real();
        r.expect("prior_clicks");
        cfg.prior_clicks = r.real();
        r.expect("prior_impressions");
        cfg.prior_impressions = r.real();
        r.expect("impressions_available");
        cfg.impressions_available = r.integer() != 0;
        if (cfg.alpha != expected.alpha || cfg.prior_clicks != expected.prior_clicks ||
            cfg.prior_impressions != expected.prior_impressions ||
            cfg.impressions_available != expected.impressions_available) {
            throw DataError("snapshot configuration does not match the engine configuration");
        }
        FeatureEngine engine(cfg);
        r.expect("catalog_registered");
        engine.catalog_registered_ = r.integer() != 0;
        r.expect("high_water_mark");
        auto hwm = r.word();
        if (hwm != "-") engine.hwm_ = parse_or_throw(hwm);
        r.expect("items");
        auto n = r.integer();
        if (n < 0) throw DataError("corrupt snapshot: negative item count");
        engine.items_.reserve(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            std::string id = r.length_prefixed();
            ItemState s;
            s.clicks = static_cast<std::uint64_t>(r.integer());
            s.linked_clicks = static_cast<std::uint64_t>(r.integer());
            s.impressions = static_cast<std::uint64_t>(r.integer());
            s.trend_value = r.real();
            s.trend_ts = r.integer();
            auto pub = r.word();
            if (pub != "-") s.publish_ts = parse_or_throw(pub);
            engine.items_.emplace(std::move(id), s);
        }
        return engine;
    }

private:
    ItemState& slot(std::string_view item) {
        auto it = items_.find(item);
        if (it == items_.end()) it = items_.emplace(std::string(item), ItemState{}).first;
        return it->second;
    }

    static std::string hex(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%a", v);
        return buf;
    }

    static std::int64_t parse_or_throw(std::string_view s) {
        auto v = text::parse_int(s);
        if (!v) throw DataError("corrupt snapshot: bad integer '" + std::string(s) + "'");
        return *v;
    }

    struct Reader {
        std::string_view rest;

        void skip_ws() {
            while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\n' || rest.front() == '\r')) {
                rest.remove_prefix(1);
            }
        }
        std::string_view word() {
            skip_ws();
            std::size_t n = 0;
            while (n < rest.size() && rest[n] != ' ' && rest[n] != '\n') ++n;
            if (n == 0) throw DataError("corrupt snapshot: unexpected end");
            auto w = rest.substr(0, n);
            rest.remove_prefix(n);
            return w;
        }
        void expect(std::string_view key) {
            if (word() != key) throw DataError("corrupt snapshot: expected '" + std::string(key) + "'");
        }
        std::int64_t integer() { return parse_or_throw(word()); }
        double real() {
            std::string w(word());
            char* end = nullptr;
            double v = std::strtod(w.c_str(), &end);
            if (end != w.c_str() + w.size()) throw DataError("corrupt snapshot: bad real '" + w + "'");
            return v;
        }
        std::string length_prefixed() {
            skip_ws();
            auto colon = rest.find(':');
            if (colon == std::string_view::npos) throw DataError("corrupt snapshot: missing item id");
            auto len = parse_or_throw(rest.substr(0, colon));
            if (len < 0 || colon + 1 + static_cast<std::size_t>(len) > rest.size()) {
                throw DataError("corrupt snapshot: bad item id length");
            }
            std::string id(rest.substr(colon + 1, static_cast<std::size_t>(len)));
            rest.remove_prefix(colon + 1 + static_cast<std::size_t>(len));
            return id;
        }
    };

    FeatureEngineConfig config_;
    bool catalog_registered_ = false;
    std::optional<Timestamp> hwm_;
    std::unordered_map<std::string, ItemState, detail::StringHash, std::equal_to<>> items_;
};

/// Engine configuration matched to a dataset's impression availability.
inline FeatureEngineConfig config_for(const Dataset& ds, FeatureEngineConfig base = {}) {
    base.impressions_available = ds.has_impressions();
    return base;
}

struct FeatureQuery {
    std::string item_id;
    Timestamp t = 0;
};

/// Interleaves ingestion and queries: the row for query (i, t) reflects
/// exactly the events with timestamp < t. The plan must be time-sorted.
inline std::vector<ContextVector> replay_with_queries(const Dataset& ds, const std::vector<FeatureQuery>& plan,
                                                      const FeatureEngineConfig& config) {
    for (std::size_t i = 1; i < plan.size(); ++i) {
        if (plan[i].t < plan[i - 1].t) throw UsageError("query plan is not sorted by time");
    }
    FeatureEngine engine(config, ds.catalog);
    std::vector<ContextVector> rows;
    rows.reserve(plan.size());
    std::size_t next = 0;
    for (const auto& q : plan) {
        while (next < ds.events.size() && ds.events[next].timestamp < q.t) engine.ingest(ds.events[next++]);
        rows.push_back(engine.query(q.item_id, q.t));
    }
    return rows;
}

/// Like replay_with_queries but accepts queries in any order; rows come
/// back in the caller's order.
inline std::vector<ContextVector> compute_features(const Dataset& ds, const std::vector<FeatureQuery>& queries,
                                                   const FeatureEngineConfig& config) {
    std::vector<std::size_t> order(queries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return queries[a].t < queries[b].t; });
    FeatureEngine engine(config, ds.catalog);
    std::vector<ContextVector> rows(queries.size());
    std::size_t next = 0;
    for (auto qi : order) {
        const auto& q = queries[qi];
        while (next < ds.events.size() && ds.events[next].timestamp < q.t) engine.ingest(ds.events[next++]);
        rows[qi] = engine.query(q.item_id, q.t);
    }
    return rows;
}

/// `item_id,t,ctr,numclicks,trendiness,freshness,mask_bits`; unavailable
/// fields are left empty.
inline std::string format_feature_table(const std::vector<FeatureQuery>& plan, const std::vector<ContextVector>& rows) {
    if (plan.size() != rows.size()) throw UsageError("feature table: plan/row count mismatch");
    std::string out = "item_id,t,ctr,numclicks,trendiness,freshness,mask_bits\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out += plan[i].item_id + "," + std::to_string(plan[i].t) + ",";
        if (r.available(Feature::Ctr)) out += text::fmt9(r.ctr);
        out += ",";
        if (r.available(Feature::NumClicks)) out += std::to_string(r.numclicks);
        out += ",";
        if (r.available(Feature::Trendiness)) out += text::fmt9(r.trendiness);
        out += ",";
        if (r.available(Feature::Freshness)) out += std::to_string(r.freshness);
        out += "," + std::to_string(r.mask_bits()) + "\n";
    }
    return out;
}

/// Query plan file: `item_id,t` per line (header optional).
inline std::vector<FeatureQuery> parse_query_plan(std::string_view content) {
    std::vector<FeatureQuery> plan;
    text::for_each_line(content, [&](std::string_view line, std::size_t lineno) {
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#' || t.rfind("item_id", 0) == 0) return;
        auto f = text::split(t, ',');
        if (f.size() < 2) throw DataError("malformed query plan line " + std::to_string(lineno));
        auto ts = text::parse_seconds(text::trim(f[1]));
        if (!ts) throw DataError("malformed query time at line " + std::to_string(lineno));
        plan.push_back({std::string(text::trim(f[0])), *ts});
    });
    return plan;
}

}  // namespace ctxrec
