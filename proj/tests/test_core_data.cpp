#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "ctxrec/core_data.hpp"

using namespace ctxrec;

namespace {

Dataset parse(std::string_view text, ParseStats* stats = nullptr, bool strict = false) {
    ParseOptions opt;
    opt.strict = strict;
    return parse_event_log(text, opt, stats);
}

}  // namespace

TEST(ParseLog, EmptyStreamGivesEmptyDataset) {
    auto ds = parse("");
    EXPECT_TRUE(ds.events.empty());
    EXPECT_TRUE(ds.catalog.empty());
}

TEST(ParseLog, MinimalClickWithImpression) {
    auto ds = parse("u1,i1,100,impression,imp1\nu1,i1,100,click,imp1\n");
    ASSERT_EQ(ds.events.size(), 2u);
    ASSERT_TRUE(ds.impressions.has_value());
    ASSERT_EQ(ds.impressions->size(), 1u);
    EXPECT_EQ(ds.impressions->front().clicked, std::vector<std::string>{"i1"});
}

TEST(ParseLog, SortsByTimestamp) {
    ParseStats stats;
    auto ds = parse("u,a,5,click,\nu,b,3,click,\nu,c,9,click,\n", &stats);
    std::vector<Timestamp> ts;
    for (const auto& e : ds.events) ts.push_back(e.timestamp);
    std::vector<Timestamp> expected{5, 3, 9};
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(ts, expected);
    EXPECT_TRUE(stats.resorted);
}

TEST(ParseLog, StableForEqualTimestamps) {
    auto ds = parse("u,a,5,click,\nu,b,1,click,\nu,c,5,click,\nu,d,5,click,\n");
    std::vector<std::string> items;
    for (const auto& e : ds.events) items.push_back(e.item_id);
    EXPECT_EQ(items, (std::vector<std::string>{"b", "a", "c", "d"}));
}

TEST(ParseLog, LenientSkipsMalformedAndCounts) {
    ParseStats stats;
    auto ds = parse("u,a,5,click,\nnot a line\nu,b,x,click,\nu,c,7,look,\n", &stats);
    EXPECT_EQ(ds.events.size(), 1u);
    EXPECT_EQ(stats.malformed, 3u);
}

TEST(ParseLog, StrictRejectsMalformed) {
    EXPECT_THROW(parse("u,a,5,click,\nbroken\n", nullptr, true), DataError);
}

TEST(ParseLog, FractionalSecondsTruncate) {
    auto ds = parse("u,a,5.9,click,\n");
    ASSERT_EQ(ds.events.size(), 1u);
    EXPECT_EQ(ds.events[0].timestamp, 5);
}

TEST(ParseLog, OrphanClickDroppedWhenLenient) {
    ParseStats stats;
    auto ds = parse("u,a,5,impression,imp1\nu,b,5,click,imp1\n", &stats);
    EXPECT_EQ(ds.events.size(), 1u);
    EXPECT_EQ(stats.orphan_clicks, 1u);
    EXPECT_THROW(parse("u,a,5,impression,imp1\nu,b,5,click,imp1\n", nullptr, true), DataError);
}

TEST(GroupImpressions, ClickedSubsetOfShown) {
    std::vector<Event> ev{{"u", "i1", 10, Action::Impression, "x"},
                          {"u", "i2", 10, Action::Impression, "x"},
                          {"u", "i3", 10, Action::Impression, "x"},
                          {"u", "i2", 10, Action::Click, "x"}};
    auto groups = group_impressions(ev);
    ASSERT_EQ(groups.size(), 1u);
    EXPECT_EQ(groups[0].shown, (std::vector<std::string>{"i1", "i2", "i3"}));
    EXPECT_EQ(groups[0].clicked, std::vector<std::string>{"i2"});
}

TEST(GroupImpressions, GroupWithoutClicksIsKept) {
    std::vector<Event> ev{{"u", "i1", 10, Action::Impression, "x"}, {"u", "i2", 10, Action::Impression, "x"}};
    auto groups = group_impressions(ev);
    ASSERT_EQ(groups.size(), 1u);
    EXPECT_TRUE(groups[0].clicked.empty());
}

TEST(GroupImpressions, TwoIdsSameTimestampGiveTwoGroups) {
    std::vector<Event> ev{{"u", "i1", 10, Action::Impression, "x"},
                          {"u", "i2", 10, Action::Impression, "y"},
                          {"v", "i1", 10, Action::Impression, "x"}};
    auto groups = group_impressions(ev);
    // Keyed by (user, impression id): (u,x), (u,y), (v,x).
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& e : ev) keys.insert({e.user_id, *e.impression_id});
    EXPECT_EQ(groups.size(), keys.size());
}

TEST(GroupImpressions, LosesNoMatchedClickProperty) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Event> ev;
        std::size_t matched = 0;
        for (int g = 0; g < 20; ++g) {
            std::string imp = "imp" + std::to_string(g);
            std::string user = "u" + std::to_string(rng() % 4);
            Timestamp t = g;
            int shown = 1 + static_cast<int>(rng() % 5);
            for (int i = 0; i < shown; ++i) ev.push_back({user, "i" + std::to_string(i), t, Action::Impression, imp});
            for (int i = 0; i < shown; ++i) {
                if (rng() % 2) {
                    ev.push_back({user, "i" + std::to_string(i), t, Action::Click, imp});
                    ++matched;
                }
            }
            if (rng() % 3 == 0) ev.push_back({user, "ghost", t, Action::Click, imp});
        }
        auto groups = group_impressions(ev);
        std::size_t total = 0;
        for (const auto& g : groups) {
            total += g.clicked.size();
            for (const auto& c : g.clicked) EXPECT_NE(std::find(g.shown.begin(), g.shown.end(), c), g.shown.end());
        }
        EXPECT_EQ(total, matched);
    }
}

TEST(Validate, MinimalDatasetIsClean) {
    auto ds = parse("u1,i1,100,impression,imp1\nu1,i1,100,click,imp1\n");
    EXPECT_TRUE(validate_dataset(ds).ok());
}

TEST(Validate, ClickBeforeImpressionIsOrderingViolation) {
    Dataset ds;
    ds.events = {{"u", "i", 50, Action::Click, "imp"}, {"u", "i", 60, Action::Impression, "imp"}};
    ds.catalog["i"] = ItemMeta{"i", {}, {}, {}};
    auto rep = validate_dataset(ds);
    EXPECT_EQ(rep.count(ViolationKind::Ordering), 1u);
}

TEST(Validate, EmbeddingDimensionMismatch) {
    Dataset ds;
    ds.embedding_dim = 8;
    ds.catalog["a"] = ItemMeta{"a", {}, {}, std::vector<double>(8, 0.0)};
    ds.catalog["b"] = ItemMeta{"b", {}, {}, std::vector<double>(8, 0.0)};
    ds.catalog["c"] = ItemMeta{"c", {}, {}, std::vector<double>(7, 0.0)};
    auto rep = validate_dataset(ds);
    EXPECT_EQ(rep.count(ViolationKind::EmbeddingDimension), 1u);
    EXPECT_EQ(rep.violations.size(), 1u);
}

TEST(Validate, MissingCatalogEntry) {
    Dataset ds;
    ds.events = {{"u", "i", 50, Action::Click, std::nullopt}};
    auto rep = validate_dataset(ds);
    EXPECT_EQ(rep.count(ViolationKind::MissingCatalogEntry), 1u);
}

TEST(RoundTrip, ParseIsIdempotent) {
    std::mt19937_64 rng(11);
    std::string log;
    for (int g = 0; g < 40; ++g) {
        Timestamp t = static_cast<Timestamp>(rng() % 1000);
        std::string imp = "imp" + std::to_string(g);
        for (int i = 0; i < 3; ++i) {
            log += "u" + std::to_string(g % 7) + ",i" + std::to_string((g + i) % 9) + "," + std::to_string(t) +
                   ",impression," + imp + "\n";
        }
        log += "u" + std::to_string(g % 7) + ",i" + std::to_string(g % 9) + "," + std::to_string(t) + ",click," + imp + "\n";
        log += "w" + std::to_string(g) + ",i" + std::to_string(g % 5) + "," + std::to_string(t) + ",click,\n";
    }
    auto once = parse(log);
    auto twice = parse(serialize_event_log(once.events));
    EXPECT_EQ(once, twice);
}

TEST(RoundTrip, CatalogAndEmbeddings) {
    Catalog cat;
    cat["a"] = ItemMeta{"a", 100, "news", std::vector<double>{0.1, -2.5}};
    cat["b"] = ItemMeta{"b", std::nullopt, std::nullopt, std::vector<double>{1e-7, 3.0}};
    ParseStats stats;
    auto c = parse_catalog(serialize_catalog(cat, true), {}, stats);
    EXPECT_TRUE(c.impressions_absent);
    auto e = parse_embeddings(serialize_embeddings(cat, 2), {}, stats);
    EXPECT_EQ(e.dim, 2u);
    ASSERT_EQ(c.items.size(), 2u);
    EXPECT_EQ(c.items.at("a").publish_ts, 100);
    EXPECT_EQ(c.items.at("a").category, std::optional<std::string>("news"));
    EXPECT_FALSE(c.items.at("b").publish_ts.has_value());
    EXPECT_EQ(e.vectors.at("a"), (std::vector<double>{0.1, -2.5}));
    EXPECT_EQ(e.vectors.at("b"), (std::vector<double>{1e-7, 3.0}));
}

TEST(Assemble, CatalogFlagDisablesImpressions) {
    ParseStats stats;
    auto events = parse_events("u,a,1,click,\nu,b,2,click,\n", {}, stats);
    auto cat = parse_catalog("#impressions=absent\na,,\nb,,\n", {}, stats);
    auto ds = assemble_dataset(events, &cat, nullptr, {}, stats);
    EXPECT_FALSE(ds.has_impressions());
}
