#include <gtest/gtest.h>

#include <filesystem>

#include "ctxrec/convert.hpp"

using namespace ctxrec;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ctxrec_convert_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(MindTime, ParsesTwelveHourClock) {
    // Reference epoch seconds computed offline for 2019-11-11 UTC.
    EXPECT_EQ(parse_mind_time("11/11/2019 9:05:58 AM"), 1573463158);
    EXPECT_EQ(parse_mind_time("11/11/2019 9:05:58 PM"), 1573506358);
    EXPECT_EQ(parse_mind_time("11/11/2019 12:05:58 AM"), 1573430758);
    EXPECT_FALSE(parse_mind_time("13/40/2019 1:00:00 AM").has_value());
    EXPECT_FALSE(parse_mind_time("garbage").has_value());
}

TEST(Mind, OneLineGivesTwoImpressionsAndOneClick) {
    auto conv = convert_mind("1\tU1\t11/11/2019 9:05:58 AM\tN5 N6\tN1-1 N2-0\n", "N1\tnews\tsub\ttitle\nN2\tsports\tsub\tt\n");
    ASSERT_EQ(conv.events.size(), 3u);
    std::size_t impressions = 0, clicks = 0;
    for (const auto& e : conv.events) {
        EXPECT_EQ(e.user_id, "U1");
        EXPECT_EQ(e.timestamp, 1573463158);
        EXPECT_EQ(e.impression_id, std::optional<std::string>("1"));
        if (e.action == Action::Impression) ++impressions;
        if (e.action == Action::Click) {
            ++clicks;
            EXPECT_EQ(e.item_id, "N1");
        }
    }
    EXPECT_EQ(impressions, 2u);
    EXPECT_EQ(clicks, 1u);
    EXPECT_EQ(conv.catalog.at("N2").category, std::optional<std::string>("sports"));
    EXPECT_TRUE(conv.has_impressions);
    // The emitted log parses back into one impression group.
    auto ds = parse_event_log(conv.log_text());
    ASSERT_TRUE(ds.impressions.has_value());
    EXPECT_EQ(ds.impressions->size(), 1u);
    EXPECT_EQ(ds.impressions->front().clicked, std::vector<std::string>{"N1"});
}

TEST(Mind, MalformedLinesCounted) {
    auto conv = convert_mind("1\tU1\tnot a time\t\tN1-1\n2\tU2\t11/11/2019 9:05:58 AM\t\tN1-x\nshort\n", "");
    EXPECT_TRUE(conv.events.empty());
    EXPECT_EQ(conv.stats.malformed, 3u);
}

TEST(Globo, ClicksOnlyAndCatalogFlagged) {
    std::string clicks =
        "user_id,session_id,session_start,session_size,click_article_id,click_timestamp\n"
        "0,1,1506825423271,2,157541,1506826828020\n"
        "0,1,1506825423271,2,68866,1506826858020\n";
    std::string meta = "article_id,category_id,created_at_ts,publisher_id,words_count\n157541,281,1506800518000,0,280\n";
    std::string emb = "0.1,0.2\n0.3,0.4\n";
    auto conv = convert_globo({clicks}, meta, emb);
    ASSERT_EQ(conv.events.size(), 2u);
    for (const auto& e : conv.events) {
        EXPECT_EQ(e.action, Action::Click);
        EXPECT_FALSE(e.impression_id.has_value());
    }
    EXPECT_EQ(conv.events[0].timestamp, 1506826828);
    EXPECT_FALSE(conv.has_impressions);
    EXPECT_NE(conv.catalog_text().find("#impressions=absent"), std::string::npos);
    EXPECT_EQ(conv.catalog.at("157541").publish_ts, 1506800518);

    ParseStats stats;
    auto events = parse_events(conv.log_text(), {}, stats);
    auto cat = parse_catalog(conv.catalog_text(), {}, stats);
    auto ds = assemble_dataset(events, &cat, nullptr, {}, stats);
    EXPECT_FALSE(ds.has_impressions());
}

TEST(ConvertDirectory, EmptyDirectoryIsError) {
    auto dir = fresh_dir("empty");
    EXPECT_THROW(convert_directory(SourceFormat::Mind, dir, dir / "out"), DataError);
    EXPECT_THROW(convert_directory(SourceFormat::Globo, dir / "missing", dir / "out"), DataError);
    EXPECT_THROW(parse_source_format("adressa"), UsageError);
}

TEST(ConvertDirectory, MindWritesCanonicalFiles) {
    auto dir = fresh_dir("mind");
    text::write_file((dir / "behaviors.tsv").string(), "1\tU1\t11/11/2019 9:05:58 AM\t\tN1-1 N2-0\n");
    text::write_file((dir / "news.tsv").string(), "N1\tnews\n");
    auto stats = convert_directory(SourceFormat::Mind, dir, dir / "out");
    EXPECT_EQ(stats.clicks, 1u);
    EXPECT_EQ(stats.impressions, 2u);
    EXPECT_TRUE(fs::exists(dir / "out" / "log.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "catalog.csv"));
}
