#pragma once

// Converters from public dataset exports to the canonical log/catalog/
// embedding files.
//
// MIND-style: behaviors.tsv (`impression_id \t user_id \t M/D/YYYY h:mm:ss AM \t history \t N1-1 N2-0 ...`)
//             news.tsv     (`news_id \t category \t subcategory \t ...`)
// Globo-style: clicks*.csv (header with user_id, click_article_id, click_timestamp in ms)
//              articles_metadata.csv (article_id, category_id, created_at_ts in ms, ...)
//              articles_embeddings.csv, optional: one row of floats per article id, row i = article i

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrec/core_data.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/text.hpp"

namespace ctxrec {

enum class SourceFormat { Mind, Globo };

inline SourceFormat parse_source_format(std::string_view s) {
    if (s == "mind") return SourceFormat::Mind;
    if (s == "globo") return SourceFormat::Globo;
    throw UsageError("unknown source format '" + std::string(s) + "' (expected mind or globo)");
}

struct ConvertStats {
    std::size_t records = 0;
    std::size_t malformed = 0;
    std::size_t impressions = 0;
    std::size_t clicks = 0;
    std::size_t items = 0;
};

struct Converted {
    std::vector<Event> events;
    Catalog catalog;
    std::size_t embedding_dim = 0;
    bool has_impressions = true;
    ConvertStats stats;

    std::string log_text() const { return serialize_event_log(events); }
    std::string catalog_text() const { return serialize_catalog(catalog, !has_impressions); }
    std::string embedding_text() const { return serialize_embeddings(catalog, embedding_dim); }
};

/// `M/D/YYYY h:mm:ss AM|PM`, read as UTC.
inline std::optional<Timestamp> parse_mind_time(std::string_view s) {
    s = text::trim(s);
    auto sp = s.find(' ');
    if (sp == std::string_view::npos) return std::nullopt;
    auto date = text::split(s.substr(0, sp), '/');
    auto rest = text::split_ws(s.substr(sp + 1));
    if (date.size() != 3 || rest.size() != 2) return std::nullopt;
    auto clock = text::split(rest[0], ':');
    if (clock.size() != 3) return std::nullopt;
    auto mo = text::parse_int(date[0]), dd = text::parse_int(date[1]), yy = text::parse_int(date[2]);
    auto hh = text::parse_int(clock[0]), mi = text::parse_int(clock[1]), ss = text::parse_int(clock[2]);
    if (!mo || !dd || !yy || !hh || !mi || !ss) return std::nullopt;
    if (*hh < 1 || *hh > 12 || *mi < 0 || *mi > 59 || *ss < 0 || *ss > 60) return std::nullopt;
    std::int64_t hour = *hh % 12;
    if (rest[1] == "PM") {
        hour += 12;
    } else if (rest[1] != "AM") {
        return std::nullopt;
    }
    using namespace std::chrono;
    year_month_day ymd{year{static_cast<int>(*yy)}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*dd)}};
    if (!ymd.ok()) return std::nullopt;
    auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<Timestamp>(days) * 86400 + hour * 3600 + *mi * 60 + *ss;
}

/// MIND-style behaviors/news to canonical events. Each `item-label` token
/// becomes an impression, and label 1 adds a click at the same time. The
/// behaviors history column has no timestamps and is not converted.
inline Converted convert_mind(std::string_view behaviors, std::string_view news) {
    Converted out;
    text::for_each_line(news, [&](std::string_view line, std::size_t) {
        auto f = text::split(line, '\t');
        if (f.size() < 2 || text::trim(f[0]).empty()) return;
        ItemMeta meta;
        meta.item_id = std::string(text::trim(f[0]));
        if (!text::trim(f[1]).empty()) meta.category = std::string(text::trim(f[1]));
        out.catalog[meta.item_id] = std::move(meta);
    });
    text::for_each_line(behaviors, [&](std::string_view line, std::size_t) {
        if (text::trim(line).empty()) return;
        ++out.stats.records;
        auto f = text::split(line, '\t');
        if (f.size() < 5) {
            ++out.stats.malformed;
            return;
        }
        auto ts = parse_mind_time(f[2]);
        auto user = text::trim(f[1]);
        auto imp = text::trim(f[0]);
        if (!ts || user.empty() || imp.empty()) {
            ++out.stats.malformed;
            return;
        }
        std::vector<std::string> clicked;
        std::vector<Event> shown;
        bool bad = false;
        for (auto tok : text::split_ws(f[4])) {
            auto dash = tok.rfind('-');
            if (dash == std::string_view::npos || dash == 0) {
                bad = true;
                break;
            }
            auto item = tok.substr(0, dash);
            auto label = tok.substr(dash + 1);
            if (label != "0" && label != "1") {
                bad = true;
                break;
            }
            shown.push_back({std::string(user), std::string(item), *ts, Action::Impression, std::string(imp)});
            if (label == "1") clicked.emplace_back(item);
        }
        if (bad || shown.empty()) {
            ++out.stats.malformed;
            return;
        }
        out.stats.impressions += shown.size();
        out.stats.clicks += clicked.size();
        for (auto& e : shown) out.events.push_back(std::move(e));
        for (auto& item : clicked) {
            out.events.push_back({std::string(user), std::move(item), *ts, Action::Click, std::string(imp)});
        }
    });
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    for (const auto& e : out.events) {
        if (out.catalog.find(e.item_id) == out.catalog.end()) out.catalog[e.item_id] = ItemMeta{e.item_id, {}, {}, {}};
    }
    out.stats.items = out.catalog.size();
    return out;
}

namespace detail {

inline std::map<std::string, std::size_t, std::less<>> header_index(std::string_view header) {
    std::map<std::string, std::size_t, std::less<>> idx;
    auto cols = text::split(header, ',');
    for (std::size_t i = 0; i < cols.size(); ++i) idx[std::string(text::trim(cols[i]))] = i;
    return idx;
}

inline std::size_t require_column(const std::map<std::string, std::size_t, std::less<>>& idx, std::string_view name) {
    auto it = idx.find(name);
    if (it == idx.end()) throw DataError("missing column '" + std::string(name) + "'");
    return it->second;
}

}  // namespace detail

/// Globo-style click sessions to canonical click events (no impressions).
/// Millisecond timestamps are truncated to seconds.
inline Converted convert_globo(const std::vector<std::string>& click_files, std::string_view metadata,
                               std::string_view embeddings = {}) {
    Converted out;
    out.has_impressions = false;

    bool first = true;
    std::map<std::string, std::size_t, std::less<>> idx;
    text::for_each_line(metadata, [&](std::string_view line, std::size_t) {
        if (text::trim(line).empty()) return;
        if (first) {
            idx = detail::header_index(line);
            first = false;
            return;
        }
        auto f = text::split(line, ',');
        auto id_col = detail::require_column(idx, "article_id");
        if (f.size() <= id_col) return;
        ItemMeta meta;
        meta.item_id = std::string(text::trim(f[id_col]));
        if (auto it = idx.find("created_at_ts"); it != idx.end() && it->second < f.size()) {
            if (auto ms = text::parse_int(text::trim(f[it->second]))) meta.publish_ts = *ms / 1000;
        }
        if (auto it = idx.find("category_id"); it != idx.end() && it->second < f.size()) {
            if (!text::trim(f[it->second]).empty()) meta.category = std::string(text::trim(f[it->second]));
        }
        out.catalog[meta.item_id] = std::move(meta);
    });

    for (const auto& content : click_files) {
        bool header = true;
        std::size_t user_col = 0, item_col = 0, ts_col = 0;
        text::for_each_line(content, [&](std::string_view line, std::size_t) {
            if (text::trim(line).empty()) return;
            if (header) {
                auto h = detail::header_index(line);
                user_col = detail::require_column(h, "user_id");
                item_col = detail::require_column(h, "click_article_id");
                ts_col = detail::require_column(h, "click_timestamp");
                header = false;
                return;
            }
            ++out.stats.records;
            auto f = text::split(line, ',');
            if (f.size() <= std::max({user_col, item_col, ts_col})) {
                ++out.stats.malformed;
                return;
            }
            auto ms = text::parse_int(text::trim(f[ts_col]));
            auto user = text::trim(f[user_col]);
            auto item = text::trim(f[item_col]);
            if (!ms || *ms < 0 || user.empty() || item.empty()) {
                ++out.stats.malformed;
                return;
            }
            out.events.push_back({std::string(user), std::string(item), *ms / 1000, Action::Click, std::nullopt});
            ++out.stats.clicks;
        });
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    for (const auto& e : out.events) {
        if (out.catalog.find(e.item_id) == out.catalog.end()) out.catalog[e.item_id] = ItemMeta{e.item_id, {}, {}, {}};
    }

    std::size_t row = 0;
    text::for_each_line(embeddings, [&](std::string_view line, std::size_t) {
        auto t = text::trim(line);
        if (t.empty()) return;
        std::string buf(t);
        std::replace(buf.begin(), buf.end(), ',', ' ');
        auto f = text::split_ws(buf);
        std::vector<double> v;
        for (auto x : f) {
            auto d = text::parse_double(x);
            if (!d) throw DataError("malformed embedding row " + std::to_string(row));
            v.push_back(*d);
        }
        if (out.embedding_dim == 0) out.embedding_dim = v.size();
        if (v.size() != out.embedding_dim) throw DataError("embedding row " + std::to_string(row) + " has wrong width");
        auto id = std::to_string(row++);
        if (auto it = out.catalog.find(id); it != out.catalog.end()) it->second.embedding = std::move(v);
    });
    out.stats.items = out.catalog.size();
    return out;
}

struct ConvertOutputs {
    std::string log;
    std::string catalog;
    std::string embeddings;
};

/// Converts a source directory and writes log.csv, catalog.csv and (when
/// embeddings exist) embeddings.txt into `out_dir`.
inline ConvertStats convert_directory(SourceFormat format, const std::filesystem::path& in_dir,
                                      const std::filesystem::path& out_dir, ConvertOutputs* written = nullptr) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(in_dir)) throw DataError("source directory '" + in_dir.string() + "' does not exist");
    if (fs::is_empty(in_dir)) throw DataError("source directory '" + in_dir.string() + "' is empty");
    Converted conv;
    if (format == SourceFormat::Mind) {
        auto behaviors = in_dir / "behaviors.tsv";
        auto news = in_dir / "news.tsv";
        if (!fs::exists(behaviors)) throw DataError("behaviors.tsv not found in '" + in_dir.string() + "'");
        conv = convert_mind(text::read_file(behaviors.string()),
                            fs::exists(news) ? text::read_file(news.string()) : std::string());
    } else {
        std::vector<fs::path> click_paths;
        auto scan = [&](const fs::path& dir) {
            for (const auto& entry : fs::directory_iterator(dir)) {
                auto name = entry.path().filename().string();
                if (entry.is_regular_file() && name.rfind("clicks", 0) == 0 && entry.path().extension() == ".csv") {
                    click_paths.push_back(entry.path());
                }
            }
        };
        scan(in_dir);
        if (fs::is_directory(in_dir / "clicks")) scan(in_dir / "clicks");
        std::sort(click_paths.begin(), click_paths.end());
        if (click_paths.empty()) throw DataError("no clicks*.csv files in '" + in_dir.string() + "'");
        std::vector<std::string> clicks;
        for (const auto& p : click_paths) clicks.push_back(text::read_file(p.string()));
        auto meta = in_dir / "articles_metadata.csv";
        auto emb = in_dir / "articles_embeddings.csv";
        conv = convert_globo(clicks, fs::exists(meta) ? text::read_file(meta.string()) : std::string(),
                             fs::exists(emb) ? text::read_file(emb.string()) : std::string());
    }
    if (conv.events.empty()) throw DataError("no events converted from '" + in_dir.string() + "'");
    fs::create_directories(out_dir);
    ConvertOutputs outputs{conv.log_text(), conv.catalog_text(), {}};
    text::write_file((out_dir / "log.csv").string(), outputs.log);
    text::write_file((out_dir / "catalog.csv").string(), outputs.catalog);
    if (conv.embedding_dim > 0) {
        outputs.embeddings = conv.embedding_text();
        text::write_file((out_dir / "embeddings.txt").string(), outputs.embeddings);
    }
    if (written) *written = std::move(outputs);
    return conv.stats;
}

}  // namespace ctxrec
