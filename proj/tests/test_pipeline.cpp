#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "ctxrec/pipeline.hpp"
#include "ctxrec/synthetic.hpp"

using namespace ctxrec;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    fs::path dir;
    RunConfig cfg;
};

const Fixture& small_run() {
    static Fixture f = [] {
        Fixture out;
        out.dir = fs::temp_directory_path() / "ctxrec_pipeline_test";
        fs::remove_all(out.dir);
        fs::create_directories(out.dir);
        SyntheticConfig sc;
        sc.users = 600;
        sc.items = 300;
        sc.horizon = 2 * 86400;
        sc.live_window = 86400;
        auto data = generate_synthetic(sc);
        text::write_file((out.dir / "log.csv").string(), data.log);
        text::write_file((out.dir / "catalog.csv").string(), data.catalog);
        text::write_file((out.dir / "embeddings.txt").string(), data.embeddings);
        out.cfg.paths.log = (out.dir / "log.csv").string();
        out.cfg.paths.catalog = (out.dir / "catalog.csv").string();
        out.cfg.paths.embeddings = (out.dir / "embeddings.txt").string();
        return out;
    }();
    return f;
}

std::string slurp(const fs::path& p) { return text::read_file(p.string()); }

}  // namespace

TEST(ModelSpec, ParsesEveryName) {
    for (std::string name : {"naive-ctr", "naive-numclicks", "naive-trendiness", "naive-freshness", "content",
                             "content+linear", "content+mlp", "gbdt"}) {
        EXPECT_EQ(parse_model_spec(name).name(), name);
    }
    EXPECT_THROW(parse_model_spec("nrms"), UsageError);
    EXPECT_EQ(parse_k_list("5,10"), (std::vector<std::size_t>{5, 10}));
    EXPECT_THROW(parse_k_list("5,x"), UsageError);
}

TEST(RunConfigJson, ReadsNestedKeysAndKeepsDefaults) {
    auto cfg = parse_run_config(R"({"seed": 9, "model": "gbdt", "neg_scheme": "recent-queue",
        "engine": {"alpha": 0.002}, "train": {"epochs": 2, "loss": "bce"}, "gbdt": {"num_trees": 7},
        "eval": {"ks": [1, 3]}, "paths": {"out": "o"}})");
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.model.kind, ModelKind::Gbdt);
    EXPECT_EQ(cfg.scheme, NegativeScheme::RecentQueue);
    EXPECT_EQ(cfg.engine.alpha, 0.002);
    EXPECT_EQ(cfg.train.epochs, 2u);
    EXPECT_EQ(cfg.train.loss, LossKind::PointwiseBCE);
    EXPECT_EQ(cfg.train.step_size, 0.05);
    EXPECT_EQ(cfg.gbdt.num_trees, 7u);
    EXPECT_EQ(cfg.eval.ks, (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(cfg.paths.out, "o");
    EXPECT_THROW(parse_run_config("{\"seed\": \"x\"}"), UsageError);
    EXPECT_THROW(parse_run_config("not json"), UsageError);
}

TEST(Pipeline, NaiveModelSkipsTraining) {
    auto cfg = small_run().cfg;
    cfg.model = parse_model_spec("naive-ctr");
    cfg.paths.out = (small_run().dir / "naive").string();
    std::size_t seen = 0;
    RunHooks hooks;
    hooks.on_training_target = [&](const EvalTarget&) { ++seen; };
    auto res = run_pipeline(cfg, hooks);
    EXPECT_EQ(seen, 0u);
    EXPECT_FALSE(fs::exists(fs::path(cfg.paths.out) / "model.txt"));
    EXPECT_TRUE(fs::exists(fs::path(cfg.paths.out) / "report_test.txt"));
    EXPECT_GT(res.test.count, 0u);
}

TEST(Pipeline, TrainingNeverSeesTestTargets) {
    auto cfg = small_run().cfg;
    for (const char* model : {"content+mlp", "gbdt"}) {
        cfg.model = parse_model_spec(model);
        auto run = prepare_run(cfg);
        std::set<std::size_t> test_ids;
        Timestamp test_start = run->splits.test.front().timestamp;
        for (const auto& t : run->splits.test) test_ids.insert(t.id);
        std::size_t seen = 0;
        RunHooks hooks;
        hooks.on_training_target = [&](const EvalTarget& t) {
            ++seen;
            EXPECT_EQ(test_ids.count(t.id), 0u);
            EXPECT_LT(t.timestamp, test_start);
        };
        train_model(cfg, *run, hooks);
        EXPECT_GT(seen, 0u);
    }
}

TEST(Pipeline, SameSeedGivesIdenticalArtifacts) {
    auto cfg = small_run().cfg;
    cfg.model = parse_model_spec("content+mlp");
    cfg.train.epochs = 2;
    auto a = small_run().dir / "det_a";
    auto b = small_run().dir / "det_b";
    cfg.paths.out = a.string();
    run_pipeline(cfg);
    cfg.paths.out = b.string();
    run_pipeline(cfg);
    for (const char* name : {"model.txt", "loss_curve.csv", "report_val.txt", "report_test.txt", "per_target_test.csv",
                             "report_test_baseline.txt", "paired_report.csv"}) {
        ASSERT_TRUE(fs::exists(a / name)) << name;
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
    }
}

TEST(Pipeline, ContextModulePositiveImprovement) {
    auto cfg = small_run().cfg;
    cfg.model = parse_model_spec("content+mlp");
    cfg.paths.out = (small_run().dir / "mlp").string();
    auto res = run_pipeline(cfg);
    ASSERT_TRUE(res.baseline_test.has_value());
    EXPECT_GT(res.test.auc, res.baseline_test->auc);
    auto paired = slurp(fs::path(cfg.paths.out) / "paired_report.csv");
    EXPECT_EQ(paired.rfind("metric,content,content+mlp,improv_pct\nauc,", 0), 0u);
}

TEST(Pipeline, SavedModelReloadsForEvaluation) {
    auto cfg = small_run().cfg;
    cfg.model = parse_model_spec("gbdt");
    cfg.gbdt.num_trees = 10;
    auto run = prepare_run(cfg);
    auto trained = train_model(cfg, *run);
    auto reloaded = parse_model(cfg.model, serialize_model(trained));
    auto a = run_evaluate(cfg, *run, trained);
    auto b = run_evaluate(cfg, *run, reloaded);
    EXPECT_EQ(format_report(a), format_report(b));
    EXPECT_EQ(trained.loss_curve.size(), 11u);
}

TEST(Pipeline, MissingLogIsStageError) {
    RunConfig cfg;
    cfg.paths.log = "/nonexistent/log.csv";
    try {
        prepare_run(cfg);
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("stage load"), std::string::npos);
    }
}

TEST(PairedReport, ImprovementColumn) {
    EvalReport base, ctx;
    base.model = "content";
    ctx.model = "content+linear";
    base.ks = ctx.ks = {5};
    base.auc = 0.5;
    ctx.auc = 0.6;
    base.ndcg = {0.4};
    ctx.ndcg = {0.4};
    base.recall = {0.8};
    ctx.recall = {0.6};
    EXPECT_EQ(format_paired_report(base, ctx),
              "metric,content,content+linear,improv_pct\n"
              "auc,0.5,0.6,20\n"
              "ndcg@5,0.4,0.4,0\n"
              "recall@5,0.8,0.6,-25\n");
    auto back = report_from_file(format_report(ctx));
    EXPECT_EQ(back.model, "content+linear");
    EXPECT_EQ(back.auc, 0.6);
    EXPECT_EQ(back.ks, std::vector<std::size_t>{5});
}
