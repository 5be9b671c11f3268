#pragma once

// Event-log data model: canonical log/catalog/embedding parsing, impression
// grouping, and dataset validation.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctxrec/error.hpp"
#include "ctxrec/text.hpp"

namespace ctxrec {

/// Seconds since epoch. Sub-second inputs are truncated when parsed.
using Timestamp = std::int64_t;

enum class Action { Impression, Click };

inline std::string_view to_string(Action a) { return a == Action::Click ? "click" : "impression"; }

struct Event {
    std::string user_id;
    std::string item_id;
    Timestamp timestamp = 0;
    Action action = Action::Impression;
    std::optional<std::string> impression_id;

    bool operator==(const Event&) const = default;
};

struct ItemMeta {
    std::string item_id;
    std::optional<Timestamp> publish_ts;
    std::optional<std::string> category;
    std::optional<std::vector<double>> embedding;

    bool operator==(const ItemMeta&) const = default;
};

struct ImpressionGroup {
    std::string user_id;
    std::string impression_id;
    Timestamp timestamp = 0;
    std::vector<std::string> shown;
    std::vector<std::string> clicked;

    bool operator==(const ImpressionGroup&) const = default;
};

using Catalog = std::map<std::string, ItemMeta, std::less<>>;

struct Dataset {
    /// Sorted by timestamp; equal timestamps keep input order.
    std::vector<Event> events;
    Catalog catalog;
    /// Declared embedding width; 0 when no embeddings are loaded.
    std::size_t embedding_dim = 0;
    /// Absent for logs that carry no impression records.
    std::optional<std::vector<ImpressionGroup>> impressions;

    bool has_impressions() const { return impressions.has_value(); }

    bool operator==(const Dataset&) const = default;
};

struct ParseOptions {
    bool strict = false;
    char separator = ',';
};

struct ParseStats {
    std::size_t lines = 0;
    std::size_t malformed = 0;
    std::size_t orphan_clicks = 0;
    std::size_t unknown_items = 0;
    bool resorted = false;
};

// ---------------------------------------------------------------------------
// Impression grouping
// ---------------------------------------------------------------------------

struct GroupStats {
    std::size_t dropped_clicks = 0;
};

/// One group per distinct (user_id, impression_id), in first-appearance order.
/// Clicks are attached to the group sharing their impression id; a click
/// whose item was not shown in that group is dropped (or throws when strict).
inline std::vector<ImpressionGroup> group_impressions(const std::vector<Event>& events, bool strict = false,
                                                      GroupStats* stats = nullptr) {
    std::vector<ImpressionGroup> groups;
    std::map<std::pair<std::string_view, std::string_view>, std::size_t> index;
    std::vector<std::set<std::string_view>> shown_sets;
    std::vector<std::set<std::string_view>> clicked_sets;

    for (const auto& e : events) {
        if (e.action != Action::Impression || !e.impression_id) continue;
        auto key = std::make_pair(std::string_view(e.user_id), std::string_view(*e.impression_id));
        auto [it, inserted] = index.try_emplace(key, groups.size());
        if (inserted) {
            groups.push_back({e.user_id, *e.impression_id, e.timestamp, {}, {}});
            shown_sets.emplace_back();
            clicked_sets.emplace_back();
        }
        if (shown_sets[it->second].insert(e.item_id).second) groups[it->second].shown.push_back(e.item_id);
    }

    GroupStats local;
    for (const auto& e : events) {
        if (e.action != Action::Click || !e.impression_id) continue;
        auto it = index.find({std::string_view(e.user_id), std::string_view(*e.impression_id)});
        if (it == index.end() || !shown_sets[it->second].count(e.item_id)) {
            if (strict) {
                throw DataError("click without matching impression: user=" + e.user_id + " item=" + e.item_id +
                                " impression=" + *e.impression_id);
            }
            ++local.dropped_clicks;
            continue;
        }
        if (clicked_sets[it->second].insert(e.item_id).second) groups[it->second].clicked.push_back(e.item_id);
    }
    if (stats) *stats = local;
    return groups;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_header_or_comment(std::string_view line) {
    auto t = text::trim(line);
    return t.empty() || t.front() == '#' || t.rfind("user_id", 0) == 0;
}

inline std::optional<Event> parse_event_line(std::string_view line, char sep) {
    auto f = text::split(line, sep);
    if (f.size() != 4 && f.size() != 5) return std::nullopt;
    Event e;
    auto user = text::trim(f[0]);
    auto item = text::trim(f[1]);
    if (user.empty() || item.empty()) return std::nullopt;
    e.user_id = std::string(user);
    e.item_id = std::string(item);
    auto ts = text::parse_seconds(text::trim(f[2]));
    if (!ts || *ts < 0) return std::nullopt;
    e.timestamp = *ts;
    auto action = text::trim(f[3]);
    if (action == "click") {
        e.action = Action::Click;
    } else if (action == "impression") {
        e.action = Action::Impression;
    } else {
        return std::nullopt;
    }
    if (f.size() == 5) {
        auto imp = text::trim(f[4]);
        if (!imp.empty()) e.impression_id = std::string(imp);
    }
    return e;
}

inline void malformed(const ParseOptions& opt, ParseStats& stats, std::string_view what, std::size_t lineno) {
    if (opt.strict) throw DataError(std::string(what) + " at line " + std::to_string(lineno));
    ++stats.malformed;
}

/// Drops clicks that carry an impression id but have no impression record
/// with the same (user, item, impression id) at or before the click.
inline std::vector<Event> drop_orphan_clicks(std::vector<Event> events, const ParseOptions& opt,
                                             ParseStats& stats) {
    std::set<std::tuple<std::string_view, std::string_view, std::string_view>> seen;
    std::vector<char> keep(events.size(), 1);
    // Events are time-sorted; impressions are registered one timestamp
    // block at a time so a click at its impression's own timestamp matches.
    std::size_t i = 0;
    while (i < events.size()) {
        std::size_t j = i;
        while (j < events.size() && events[j].timestamp == events[i].timestamp) {
            const auto& e = events[j];
            if (e.action == Action::Impression && e.impression_id) seen.insert({e.user_id, e.item_id, *e.impression_id});
            ++j;
        }
        for (std::size_t k = i; k < j; ++k) {
            const auto& e = events[k];
            if (e.action == Action::Click && e.impression_id && !seen.count({e.user_id, e.item_id, *e.impression_id})) {
                if (opt.strict) {
                    throw DataError("click without preceding impression: user=" + e.user_id + " item=" + e.item_id +
                                    " impression=" + *e.impression_id);
                }
                ++stats.orphan_clicks;
                keep[k] = 0;
            }
        }
        i = j;
    }
    seen.clear();
    std::vector<Event> out;
    out.reserve(events.size());
    for (std::size_t k = 0; k < events.size(); ++k) {
        if (keep[k]) out.push_back(std::move(events[k]));
    }
    return out;
}

}  // namespace detail

/// Raw events of a canonical log, stably time-sorted. Catalog handling and
/// grouping happen in `parse_event_log` / `assemble_dataset`.
inline std::vector<Event> parse_events(std::string_view content, const ParseOptions& opt, ParseStats& stats) {
    std::vector<Event> events;
    text::for_each_line(content, [&](std::string_view line, std::size_t lineno) {
        if (detail::is_header_or_comment(line)) return;
        ++stats.lines;
        auto e = detail::parse_event_line(line, opt.separator);
        if (!e) {
            detail::malformed(opt, stats, "malformed event line", lineno);
            return;
        }
        events.push_back(std::move(*e));
    });
    if (!std::is_sorted(events.begin(), events.end(),
                        [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; })) {
        stats.resorted = true;
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    }
    return events;
}

struct CatalogFile {
    Catalog items;
    /// Set by a `#impressions=absent` marker line.
    bool impressions_absent = false;
};

/// `item_id,publish_ts,category`, empty fields allowed.
inline CatalogFile parse_catalog(std::string_view content, const ParseOptions& opt, ParseStats& stats) {
    CatalogFile out;
    text::for_each_line(content, [&](std::string_view line, std::size_t lineno) {
        auto t = text::trim(line);
        if (t.empty()) return;
        if (t.front() == '#') {
            if (t.find("impressions=absent") != std::string_view::npos) out.impressions_absent = true;
            return;
        }
        if (t.rfind("item_id", 0) == 0) return;
        auto f = text::split(t, opt.separator);
        if (f.empty() || f.size() > 3 || text::trim(f[0]).empty()) {
            detail::malformed(opt, stats, "malformed catalog line", lineno);
            return;
        }
        ItemMeta meta;
        meta.item_id = std::string(text::trim(f[0]));
        if (f.size() > 1 && !text::trim(f[1]).empty()) {
            auto ts = text::parse_seconds(text::trim(f[1]));
            if (!ts) {
                detail::malformed(opt, stats, "malformed publish_ts", lineno);
                return;
            }
            meta.publish_ts = *ts;
        }
        if (f.size() > 2 && !text::trim(f[2]).empty()) meta.category = std::string(text::trim(f[2]));
        out.items[meta.item_id] = std::move(meta);
    });
    return out;
}

struct EmbeddingFile {
    std::size_t dim = 0;
    std::map<std::string, std::vector<double>, std::less<>> vectors;
};

/// First line `dim=<D>`, then `item_id v1 ... vD` per line.
inline EmbeddingFile parse_embeddings(std::string_view content, const ParseOptions& opt, ParseStats& stats) {
    EmbeddingFile out;
    bool have_dim = false;
    text::for_each_line(content, [&](std::string_view line, std::size_t lineno) {
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') return;
        if (!have_dim) {
            if (t.rfind("dim=", 0) != 0) throw DataError("embedding file must start with dim=<D>");
            auto d = text::parse_int(t.substr(4));
            if (!d || *d <= 0) throw DataError("invalid embedding dimension");
            out.dim = static_cast<std::size_t>(*d);
            have_dim = true;
            return;
        }
        auto f = text::split_ws(t);
        if (f.size() != out.dim + 1) {
            detail::malformed(opt, stats, "embedding dimension mismatch", lineno);
            return;
        }
        std::vector<double> v;
        v.reserve(out.dim);
        for (std::size_t i = 1; i < f.size(); ++i) {
            auto x = text::parse_double(f[i]);
            if (!x) {
                detail::malformed(opt, stats, "malformed embedding value", lineno);
                return;
            }
            v.push_back(*x);
        }
        out.vectors[std::string(f[0])] = std::move(v);
    });
    if (!have_dim && !content.empty()) throw DataError("embedding file must start with dim=<D>");
    return out;
}

/// Builds a Dataset satisfying every type invariant from already-parsed
/// parts. `catalog` may be null, in which case it is derived from events.
inline Dataset assemble_dataset(std::vector<Event> events, const CatalogFile* catalog,
                                const EmbeddingFile* embeddings, const ParseOptions& opt, ParseStats& stats) {
    Dataset ds;
    ds.events = detail::drop_orphan_clicks(std::move(events), opt, stats);
    if (catalog) ds.catalog = catalog->items;

    for (const auto& e : ds.events) {
        if (ds.catalog.find(e.item_id) != ds.catalog.end()) continue;
        if (catalog) {
            if (opt.strict) throw DataError("unknown item_id '" + e.item_id + "' (not in catalog)");
            ++stats.unknown_items;
        }
        ItemMeta meta;
        meta.item_id = e.item_id;
        ds.catalog.emplace(e.item_id, std::move(meta));
    }

    if (embeddings) {
        ds.embedding_dim = embeddings->dim;
        for (const auto& [id, vec] : embeddings->vectors) {
            auto it = ds.catalog.find(id);
            if (it == ds.catalog.end()) {
                ItemMeta meta;
                meta.item_id = id;
                it = ds.catalog.emplace(id, std::move(meta)).first;
            }
            it->second.embedding = vec;
        }
    }

    bool any_impression = std::any_of(ds.events.begin(), ds.events.end(),
                                      [](const Event& e) { return e.action == Action::Impression; });
    bool flagged_absent = catalog && catalog->impressions_absent;
    if (any_impression && !flagged_absent) {
        GroupStats gs;
        ds.impressions = group_impressions(ds.events, opt.strict, &gs);
        stats.orphan_clicks += gs.dropped_clicks;
    }
    return ds;
}

/// Parses a canonical event log (`user_id,item_id,timestamp,action,impression_id`).
inline Dataset parse_event_log(std::string_view content, const ParseOptions& opt = {}, ParseStats* stats = nullptr) {
    ParseStats local;
    auto events = parse_events(content, opt, local);
    auto ds = assemble_dataset(std::move(events), nullptr, nullptr, opt, local);
    if (stats) *stats = local;
    return ds;
}

struct DatasetPaths {
    std::string log;
    std::string catalog;
    std::string embeddings;
};

inline Dataset load_dataset(const DatasetPaths& paths, const ParseOptions& opt = {}, ParseStats* stats = nullptr) {
    ParseStats local;
    auto events = parse_events(text::read_file(paths.log), opt, local);
    std::optional<CatalogFile> catalog;
    std::optional<EmbeddingFile> embeddings;
    if (!paths.catalog.empty()) catalog = parse_catalog(text::read_file(paths.catalog), opt, local);
    if (!paths.embeddings.empty()) embeddings = parse_embeddings(text::read_file(paths.embeddings), opt, local);
    auto ds = assemble_dataset(std::move(events), catalog ? &*catalog : nullptr, embeddings ? &*embeddings : nullptr,
                               opt, local);
    if (stats) *stats = local;
    return ds;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string serialize_event_log(const std::vector<Event>& events) {
    std::string out;
    out.reserve(events.size() * 32);
    for (const auto& e : events) {
        out += e.user_id;
        out += ',';
        out += e.item_id;
        out += ',';
        out += std::to_string(e.timestamp);
        out += ',';
        out += to_string(e.action);
        out += ',';
        if (e.impression_id) out += *e.impression_id;
        out += '\n';
    }
    return out;
}

inline std::string serialize_catalog(const Catalog& catalog, bool impressions_absent = false) {
    std::string out;
    if (impressions_absent) out += "#impressions=absent\n";
    for (const auto& [id, meta] : catalog) {
        out += id;
        out += ',';
        if (meta.publish_ts) out += std::to_string(*meta.publish_ts);
        out += ',';
        if (meta.category) out += *meta.category;
        out += '\n';
    }
    return out;
}

inline std::string serialize_embeddings(const Catalog& catalog, std::size_t dim) {
    std::string out = "dim=" + std::to_string(dim) + "\n";
    for (const auto& [id, meta] : catalog) {
        if (!meta.embedding) continue;
        out += id;
        for (double v : *meta.embedding) {
            out += ' ';
            out += text::fmt17(v);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationKind { Ordering, OrphanClick, MissingCatalogEntry, EmbeddingDimension, GroupTimestamp };

inline std::string_view to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::Ordering: return "ordering";
        case ViolationKind::OrphanClick: return "orphan-click";
        case ViolationKind::MissingCatalogEntry: return "missing-catalog-entry";
        case ViolationKind::EmbeddingDimension: return "embedding-dimension";
        case ViolationKind::GroupTimestamp: return "group-timestamp";
    }
    return "unknown";
}

struct Violation {
    ViolationKind kind;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    std::size_t count(ViolationKind k) const {
        return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                       [k](const Violation& v) { return v.kind == k; }));
    }
};

/// Lists every invariant violation; an empty report means the dataset is valid.
inline ValidationReport validate_dataset(const Dataset& ds) {
    ValidationReport report;
    auto add = [&](ViolationKind k, std::string d) { report.violations.push_back({k, std::move(d)}); };

    for (std::size_t i = 1; i < ds.events.size(); ++i) {
        if (ds.events[i].timestamp < ds.events[i - 1].timestamp) {
            add(ViolationKind::Ordering, "event " + std::to_string(i) + " precedes event " + std::to_string(i - 1));
        }
    }

    // Impression timestamps per (user, item, impression id).
    std::map<std::tuple<std::string_view, std::string_view, std::string_view>, Timestamp> impression_ts;
    std::map<std::pair<std::string_view, std::string_view>, Timestamp> group_ts;
    for (const auto& e : ds.events) {
        if (e.action != Action::Impression || !e.impression_id) continue;
        auto key = std::make_tuple(std::string_view(e.user_id), std::string_view(e.item_id),
                                   std::string_view(*e.impression_id));
        auto [it, inserted] = impression_ts.try_emplace(key, e.timestamp);
        if (!inserted) it->second = std::min(it->second, e.timestamp);
        auto [git, ginserted] = group_ts.try_emplace({e.user_id, *e.impression_id}, e.timestamp);
        if (!ginserted && git->second != e.timestamp) {
            add(ViolationKind::GroupTimestamp, "impression " + *e.impression_id + " spans several timestamps");
        }
    }
    for (const auto& e : ds.events) {
        if (e.action != Action::Click || !e.impression_id) continue;
        auto it = impression_ts.find({e.user_id, e.item_id, *e.impression_id});
        if (it == impression_ts.end()) {
            add(ViolationKind::OrphanClick, "click on " + e.item_id + " in " + *e.impression_id + " has no impression");
        } else if (it->second > e.timestamp) {
            add(ViolationKind::Ordering, "click on " + e.item_id + " at t=" + std::to_string(e.timestamp) +
                                             " precedes its impression at t=" + std::to_string(it->second));
        }
    }

    std::set<std::string_view> missing;
    for (const auto& e : ds.events) {
        if (ds.catalog.find(e.item_id) == ds.catalog.end() && missing.insert(e.item_id).second) {
            add(ViolationKind::MissingCatalogEntry, "item " + e.item_id + " not in catalog");
        }
    }

    // Declared dimension, or the first embedding seen when none is declared.
    std::size_t dim = ds.embedding_dim;
    for (const auto& [id, meta] : ds.catalog) {
        if (!meta.embedding) continue;
        if (dim == 0) dim = meta.embedding->size();
        if (meta.embedding->size() != dim) {
            add(ViolationKind::EmbeddingDimension, "item " + id + " has embedding length " +
                                                       std::to_string(meta.embedding->size()) + ", expected " +
                                                       std::to_string(dim));
        }
    }
    return report;
}

}  // namespace ctxrec
