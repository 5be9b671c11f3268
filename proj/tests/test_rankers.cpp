#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctxrec/rankers.hpp"
#include "oracles.hpp"

using namespace ctxrec;

namespace {

ContextVector context(double ctr, std::uint64_t clicks, double trend, std::int64_t fresh) {
    ContextVector cv;
    cv.ctr = ctr;
    cv.numclicks = clicks;
    cv.trendiness = trend;
    cv.freshness = fresh;
    cv.mask = {true, true, true, true};
    return cv;
}

std::vector<std::size_t> naive_order(Feature f, const std::vector<ContextVector>& cvs,
                                     const std::vector<std::string>& items) {
    std::vector<double> logits;
    for (const auto& cv : cvs) logits.push_back(score_naive(NaiveRanker{f}, cv));
    return rank_order(items, logits);
}

std::vector<TrainingGroup> random_groups(std::mt19937_64& rng, std::size_t n, std::size_t candidates) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<TrainingGroup> out(n);
    for (auto& g : out) {
        for (std::size_t c = 0; c < candidates; ++c) {
            g.content_logits.push_back(2.0 * u(rng) - 1.0);
            ContextVector cv = context(u(rng), rng() % 50, 5.0 * u(rng), static_cast<std::int64_t>(rng() % 100000));
            if (rng() % 5 == 0) cv.mask[rng() % kNumFeatures] = false;
            g.features.push_back(scale_context(cv));
        }
    }
    return out;
}

}  // namespace

TEST(Scale, KnownValues) {
    EXPECT_EQ(scale(Feature::Ctr, 0.3), 0.3);
    EXPECT_EQ(scale(Feature::NumClicks, 0.0), 0.0);
    EXPECT_NEAR(scale(Feature::Freshness, std::exp(1.0) - 1.0), 1.0, 1e-15);
    EXPECT_THROW(scale(Feature::Trendiness, -1.0), DataError);
}

TEST(Scale, MonotoneNondecreasing) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1e6);
    for (auto f : kAllFeatures) {
        for (int i = 0; i < 1000; ++i) {
            double a = u(rng), b = u(rng);
            if (a > b) std::swap(a, b);
            EXPECT_LE(scale(f, a), scale(f, b));
        }
    }
}

TEST(Scale, UnavailableTakesFillAndKeepsMask) {
    ContextVector cv;
    cv.mask = {false, true, true, false};
    cv.numclicks = 3;
    auto s = scale_context(cv, {0.5, 0, 0, -1});
    EXPECT_EQ(s.values[0], 0.5);
    EXPECT_EQ(s.values[3], -1);
    EXPECT_EQ(s.mask, cv.mask);
    EXPECT_NEAR(s.values[1], std::log(4.0), 1e-15);
}

TEST(Naive, CtrOrder) {
    std::vector<std::string> items{"a", "b", "c"};
    auto order = naive_order(Feature::Ctr, {context(0.2, 0, 0, 0), context(0.5, 0, 0, 0), context(0.1, 0, 0, 0)}, items);
    EXPECT_EQ(order, (std::vector<std::size_t>{1, 0, 2}));
}

TEST(Naive, FresherItemFirst) {
    std::vector<std::string> items{"old", "new"};
    auto order = naive_order(Feature::Freshness, {context(0, 0, 0, 60), context(0, 0, 0, 30)}, items);
    EXPECT_EQ(order.front(), 1u);
}

TEST(Naive, TiesByItemId) {
    std::vector<std::string> items{"c", "a", "b"};
    auto order = naive_order(Feature::Trendiness, {context(0, 0, 1, 0), context(0, 0, 1, 0), context(0, 0, 1, 0)}, items);
    EXPECT_EQ(order, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Naive, UnavailableSinksToFloor) {
    ContextVector missing;
    EXPECT_EQ(score_naive(NaiveRanker{Feature::Ctr}, missing), std::numeric_limits<double>::lowest());
}

TEST(Naive, ArgsortInvariantUnderMonotoneTransform) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> items;
        std::vector<ContextVector> raw, transformed;
        for (int i = 0; i < 10; ++i) {
            items.push_back("i" + std::to_string(i));
            double v = std::floor(u(rng));  // ties are likely
            raw.push_back(context(0, 0, v, 0));
            transformed.push_back(context(0, 0, std::exp(v / 10.0) + 3.0, 0));
        }
        EXPECT_EQ(naive_order(Feature::Trendiness, raw, items), naive_order(Feature::Trendiness, transformed, items));
    }
}

TEST(Content, MeanOfRecentHistoryDotCandidate) {
    Dataset ds;
    ds.embedding_dim = 2;
    ds.catalog["a"] = ItemMeta{"a", {}, {}, std::vector<double>{1.0, 0.0}};
    ds.catalog["b"] = ItemMeta{"b", {}, {}, std::vector<double>{0.0, 1.0}};
    ds.catalog["c"] = ItemMeta{"c", {}, {}, std::vector<double>{2.0, 4.0}};
    ContentScorer scorer(ds, 2);
    std::vector<HistoryEntry> hist{{"c", 1}, {"a", 2}, {"b", 3}};
    // Only the last two entries count: mean (0.5, 0.5).
    ScoreRequest req{hist, "c", 10, nullptr, {}};
    EXPECT_DOUBLE_EQ(scorer.score(req), 3.0);
    ScoreRequest unknown{hist, "zzz", 10, nullptr, {}};
    EXPECT_EQ(scorer.score(unknown), 0.0);
}

TEST(Content, LogitTableOverrides) {
    ContentScorer scorer;
    scorer.set_logit_table(parse_logit_table("impression_id,item_id,logit\nimp1,a,0.75\n"));
    ScoreRequest req{{}, "a", 0, nullptr, "imp1"};
    EXPECT_EQ(scorer.score(req), 0.75);
}

TEST(Combiner, LinearWithContextDisabledIsContentLogit) {
    CombinerModel m(CombinerMode::LinearNaive);
    auto x = scale_context(context(0.3, 10, 2, 100));
    EXPECT_EQ(m.forward(1.25, x), 1.25);
}

TEST(Combiner, LinearSingleTerm) {
    CombinerModel m(CombinerMode::LinearNaive);
    m.linear_weight(Feature::Ctr) = 2.0;
    auto x = scale_context(context(0.3, 0, 0, 0));
    EXPECT_DOUBLE_EQ(m.forward(0.0, x), 0.6);
}

TEST(Combiner, MlpBiasPathOnly) {
    CombinerModel m(CombinerMode::MlpModule, 4);
    m.params()[CombinerModel::kContent] = 0.5;
    m.params()[CombinerModel::kBias] = 0.25;
    m.w_ctx() = 2.0;
    for (std::size_t j = 0; j < 4; ++j) {
        m.b1(j) = static_cast<double>(j) - 1.5;  // -1.5, -0.5, 0.5, 1.5
        m.w2(j) = 1.0;
    }
    m.b2() = 0.1;
    auto x = scale_context(context(0.3, 10, 2, 100));
    // Hidden units relu(b1) = 0, 0, 0.5, 1.5, so MLP output = 2.0 + 0.1.
    double mlp = 0.5 + 1.5 + 0.1;
    EXPECT_DOUBLE_EQ(m.forward(3.0, x), 0.5 * 3.0 + 2.0 * mlp + 0.25);
}

TEST(Combiner, ZeroContextWeightsKeepContentRanking) {
    std::mt19937_64 rng(4);
    for (auto mode : {CombinerMode::LinearNaive, CombinerMode::MlpModule}) {
        CombinerModel m(mode);
        if (mode == CombinerMode::MlpModule) m.w_ctx() = 0.0;
        auto groups = random_groups(rng, 50, 10);
        for (const auto& g : groups) {
            std::vector<std::string> items;
            std::vector<double> combined;
            for (std::size_t c = 0; c < g.content_logits.size(); ++c) {
                items.push_back("i" + std::to_string(c));
                combined.push_back(m.forward(g.content_logits[c], g.features[c]));
            }
            EXPECT_EQ(rank_order(items, combined), rank_order(items, g.content_logits));
        }
    }
}

TEST(Combiner, MissingIndicatorAddsWeight) {
    CombinerModel m(CombinerMode::LinearNaive);
    m.params()[CombinerModel::kMissing + 0] = -0.7;
    ContextVector cv = context(0, 0, 0, 0);
    cv.mask[0] = false;
    EXPECT_DOUBLE_EQ(m.forward(0.0, scale_context(cv)), -0.7);
}

TEST(Train, SoftmaxLossDecreasesOnSeparableToy) {
    TrainingGroup g;
    g.content_logits = {0.0, 0.0, 0.0};
    g.features = {scale_context(context(0.9, 0, 0, 0)), scale_context(context(0.1, 0, 0, 0)),
                  scale_context(context(0.2, 0, 0, 0))};
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 1;
    auto res = train(CombinerModel(CombinerMode::LinearNaive), {g}, cfg);
    ASSERT_EQ(res.loss_curve.size(), 10u);
    for (std::size_t i = 1; i < res.loss_curve.size(); ++i) EXPECT_LT(res.loss_curve[i], res.loss_curve[i - 1]);
}

TEST(Train, FirstStepFollowsHandGradient) {
    TrainingGroup g;
    g.content_logits = {0.4, -0.2, 0.1};
    g.features = {scale_context(context(0.9, 3, 1, 10)), scale_context(context(0.1, 0, 0, 20)),
                  scale_context(context(0.2, 7, 2, 5))};
    CombinerModel m(CombinerMode::LinearNaive);
    m.params()[CombinerModel::kContent] = 0.0;
    // Hand softmax CE gradient: d/dw_i = sum_j (p_j - y_j) x_ji with p uniform (all logits 0).
    std::array<double, kNumFeatures> hand{};
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        for (std::size_t j = 0; j < 3; ++j) hand[i] += (1.0 / 3.0 - (j == 0 ? 1.0 : 0.0)) * g.features[j].values[i];
    }
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 1;
    auto res = train(m, {g}, cfg);
    for (auto f : kAllFeatures) {
        auto i = static_cast<std::size_t>(f);
        double moved = res.model.linear_weight(f);
        if (hand[i] == 0.0) {
            EXPECT_EQ(moved, 0.0);
        } else {
            EXPECT_NEAR(moved, -cfg.step_size * hand[i], 1e-12);
            EXPECT_EQ(std::signbit(moved), !std::signbit(hand[i]));
        }
    }
}

TEST(Train, DeterministicForSeed) {
    std::mt19937_64 rng(8);
    auto groups = random_groups(rng, 300, 5);
    CombinerModel m(CombinerMode::MlpModule, 8);
    m.init_random(3);
    TrainConfig cfg;
    cfg.momentum = 0.5;
    auto a = train(m, groups, cfg);
    auto b = train(m, groups, cfg);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.loss_curve, b.loss_curve);
}

TEST(Train, RejectsBadConfigAndEmptySet) {
    TrainConfig cfg;
    cfg.batch_size = 0;
    std::mt19937_64 rng(9);
    EXPECT_THROW(train(CombinerModel(), random_groups(rng, 3, 3), cfg), UsageError);
    EXPECT_THROW(train(CombinerModel(), {}, TrainConfig{}), DataError);
}

TEST(GradCheck, LinearWithinTolerance) {
    std::mt19937_64 rng(10);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CombinerModel m(CombinerMode::LinearNaive);
        std::mt19937_64 prng(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto& p : m.params()) p = u(prng);
        auto batch = random_groups(rng, 8, 5);
        EXPECT_LE(grad_check(m, batch), 1e-6);
        EXPECT_LE(grad_check(m, batch, {1e-5, 1e-3, LossKind::PointwiseBCE}), 1e-6);
    }
}

TEST(GradCheck, MlpH8WithinTolerance) {
    std::mt19937_64 rng(12);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CombinerModel m(CombinerMode::MlpModule, 8);
        m.init_random(seed);
        auto batch = random_groups(rng, 8, 5);
        EXPECT_LE(grad_check(m, batch), 1e-4);
    }
}

TEST(GradCheck, EmptyBatchIsError) {
    EXPECT_THROW(grad_check(CombinerModel(), {}), UsageError);
}

TEST(ModelFile, RoundTrip) {
    CombinerModel m(CombinerMode::MlpModule, 4, false);
    m.init_random(5);
    auto text = serialize_combiner(m, {0.1, 0, 0, 0});
    auto loaded = parse_combiner(text);
    EXPECT_EQ(loaded.model.mode(), CombinerMode::MlpModule);
    EXPECT_EQ(loaded.model.hidden(), 4u);
    EXPECT_FALSE(loaded.model.missing_indicators());
    EXPECT_EQ(loaded.fill[0], 0.1);
    for (std::size_t i = 0; i < m.parameter_count(); ++i) {
        EXPECT_NEAR(loaded.model.params()[i], m.params()[i], 1e-8 * std::max(1.0, std::abs(m.params()[i])));
    }
    EXPECT_EQ(serialize_combiner(loaded.model, loaded.fill), text);
    EXPECT_THROW(parse_combiner("nonsense"), DataError);
}
