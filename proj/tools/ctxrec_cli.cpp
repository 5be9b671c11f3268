// ctxrec command-line front end. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ctxrec/ctxrec.hpp"

namespace {

using namespace ctxrec;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool strict = false;
    std::string out;
    std::string model;
    std::string neg_scheme;
    std::string ks;
    std::string log;
    std::string catalog;
    std::string embeddings;
    std::string content_logits;
};

void add_data_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("--log", c.log, "Canonical event log");
    cmd->add_option("--catalog", c.catalog, "Catalog file");
    cmd->add_option("--embeddings", c.embeddings, "Embedding file");
    cmd->add_flag("--strict", c.strict, "Reject malformed input instead of skipping it");
}

void add_run_flags(CLI::App* cmd, Common& c) {
    add_data_flags(cmd, c);
    cmd->add_option("--config", c.config, "JSON run configuration");
    cmd->add_option("--seed", c.seed, "Root seed");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--model", c.model, "Model")
        ->check(CLI::IsMember({"naive-ctr", "naive-numclicks", "naive-trendiness", "naive-freshness", "content",
                               "content+linear", "content+mlp", "gbdt"}));
    cmd->add_option("--neg-scheme", c.neg_scheme, "Negative sampling scheme")
        ->check(CLI::IsMember({"impression", "recent-queue"}));
    cmd->add_option("--k", c.ks, "Cutoffs, e.g. 5,10");
    cmd->add_option("--content-logits", c.content_logits, "impression_id,item_id,logit table");
}

/// Config file first, then flags that were given on the command line.
RunConfig resolve(const Common& c) {
    RunConfig cfg;
    if (!c.config.empty()) cfg = parse_run_config(text::read_file(c.config));
    if (c.seed) cfg.seed = *c.seed;
    if (c.strict) cfg.strict = true;
    if (!c.out.empty()) cfg.paths.out = c.out;
    if (!c.model.empty()) cfg.model = parse_model_spec(c.model);
    if (!c.neg_scheme.empty()) cfg.scheme = parse_negative_scheme(c.neg_scheme);
    if (!c.ks.empty()) cfg.eval.ks = parse_k_list(c.ks);
    if (!c.log.empty()) cfg.paths.log = c.log;
    if (!c.catalog.empty()) cfg.paths.catalog = c.catalog;
    if (!c.embeddings.empty()) cfg.paths.embeddings = c.embeddings;
    if (!c.content_logits.empty()) cfg.paths.content_logits = c.content_logits;
    return cfg;
}

void print_report(const EvalReport& r) {
    std::printf("%s %s: targets=%zu dropped=%zu auc=%s", r.model.c_str(), r.split.c_str(), r.count, r.dropped,
                text::fmt9(r.auc).c_str());
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
        std::printf(" ndcg@%zu=%s recall@%zu=%s", r.ks[i], text::fmt9(r.ndcg[i]).c_str(), r.ks[i],
                    text::fmt9(r.recall[i]).c_str());
    }
    std::printf("\n");
}

void print_run_summary(const PreparedRun& run) {
    std::printf("events=%zu malformed=%zu scheme=%s train=%zu val=%zu test=%zu dropped_targets=%zu\n",
                run.dataset.events.size(), run.parse.malformed, std::string(to_string(run.scheme)).c_str(),
                run.splits.train.size(), run.splits.val.size(), run.splits.test.size(), run.sampler.dropped());
}

int run(int argc, char** argv) {
    CLI::App app{"Contextual-feature news ranking toolkit"};
    app.require_subcommand(1);
    Common c;

    auto* convert = app.add_subcommand("convert", "Convert a MIND- or Globo-style export to canonical files");
    std::string format, in_dir;
    convert->add_option("--format", format, "mind or globo")->required();
    convert->add_option("--in", in_dir, "Source directory")->required();
    convert->add_option("--out", c.out, "Output directory")->required();

    auto* validate = app.add_subcommand("validate", "Check a dataset for invariant violations");
    add_data_flags(validate, c);
    validate->add_option("--config", c.config, "JSON run configuration");

    auto* features = app.add_subcommand("features", "Compute point-in-time features for a query plan");
    add_data_flags(features, c);
    std::string queries;
    features->add_option("--config", c.config, "JSON run configuration");
    features->add_option("--queries", queries, "item_id,t query plan")->required();
    features->add_option("--out", c.out, "Output file (default stdout)");

    auto* train = app.add_subcommand("train", "Train a model and evaluate it on the validation split");
    add_run_flags(train, c);

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a model on the test split");
    add_run_flags(evaluate, c);
    std::string model_file;
    evaluate->add_option("--model-file", model_file, "Trained model file");

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic log with a known click model");
    SyntheticConfig sim;
    simulate->add_option("--out", c.out, "Output directory")->required();
    simulate->add_option("--seed", sim.seed, "Generator seed");
    simulate->add_option("--users", sim.users, "Number of users");
    simulate->add_option("--items", sim.items, "Number of items");
    double days = 7.0;
    simulate->add_option("--days", days, "Horizon in days");
    simulate->add_option("--beta-ctr", sim.beta_ctr, "Weight on latent item CTR");
    simulate->add_option("--beta-trendiness", sim.beta_trendiness, "Weight on ln(1+trendiness)");
    simulate->add_option("--beta-freshness", sim.beta_freshness, "Weight on ln(1+freshness)");
    simulate->add_option("--affinity", sim.affinity_weight, "Weight on user-item affinity");
    simulate->add_option("--intercept", sim.intercept, "Click-model intercept");

    auto* report = app.add_subcommand("report", "Full run with a content-baseline vs +context paired report");
    add_run_flags(report, c);
    std::string baseline_file, ctx_file;
    report->add_option("--baseline", baseline_file, "Existing baseline report (skips the run)");
    report->add_option("--ctx", ctx_file, "Existing +context report (with --baseline)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (convert->parsed()) {
        auto stats = convert_directory(parse_source_format(format), in_dir, c.out);
        std::printf("records=%zu malformed=%zu impressions=%zu clicks=%zu items=%zu\n", stats.records, stats.malformed,
                    stats.impressions, stats.clicks, stats.items);
        return 0;
    }
    if (validate->parsed()) {
        auto cfg = resolve(c);
        ParseOptions opt;
        opt.strict = cfg.strict;
        ParseStats stats;
        auto ds = load_dataset({cfg.paths.log, cfg.paths.catalog, cfg.paths.embeddings}, opt, &stats);
        auto rep = validate_dataset(ds);
        std::printf("events=%zu malformed=%zu orphan_clicks=%zu unknown_items=%zu violations=%zu\n", ds.events.size(),
                    stats.malformed, stats.orphan_clicks, stats.unknown_items, rep.violations.size());
        for (const auto& v : rep.violations) {
            std::printf("%s: %s\n", std::string(to_string(v.kind)).c_str(), v.detail.c_str());
        }
        return rep.ok() ? 0 : 2;
    }
    if (features->parsed()) {
        auto cfg = resolve(c);
        ParseOptions opt;
        opt.strict = cfg.strict;
        auto ds = load_dataset({cfg.paths.log, cfg.paths.catalog, cfg.paths.embeddings}, opt);
        auto plan = parse_query_plan(text::read_file(queries));
        auto rows = compute_features(ds, plan, config_for(ds, cfg.engine));
        auto table = format_feature_table(plan, rows);
        if (c.out.empty()) {
            std::fwrite(table.data(), 1, table.size(), stdout);
        } else {
            text::write_file(c.out, table);
        }
        return 0;
    }
    if (train->parsed()) {
        auto cfg = resolve(c);
        auto prepared = prepare_run(cfg);
        print_run_summary(*prepared);
        auto res = run_train(cfg, *prepared);
        print_report(res.val);
        return 0;
    }
    if (evaluate->parsed()) {
        auto cfg = resolve(c);
        TrainedModel model;
        model.spec = cfg.model;
        model.fill = cfg.fill;
        if (cfg.model.trainable()) {
            if (model_file.empty()) throw UsageError(cfg.model.name() + " needs --model-file");
            model = parse_model(cfg.model, text::read_file(model_file));
        }
        auto prepared = prepare_run(cfg);
        print_run_summary(*prepared);
        print_report(run_evaluate(cfg, *prepared, model));
        return 0;
    }
    if (simulate->parsed()) {
        sim.horizon = static_cast<Timestamp>(days * 86400.0);
        auto data = generate_synthetic(sim);
        std::filesystem::path out(c.out);
        std::filesystem::create_directories(out);
        text::write_file((out / "log.csv").string(), data.log);
        text::write_file((out / "catalog.csv").string(), data.catalog);
        text::write_file((out / "embeddings.txt").string(), data.embeddings);
        text::write_file((out / "ground_truth.txt").string(), data.ground_truth);
        std::printf("events=%zu impressions=%zu items=%zu\n", data.dataset.events.size(),
                    data.dataset.impressions ? data.dataset.impressions->size() : 0, data.dataset.catalog.size());
        return 0;
    }
    if (report->parsed()) {
        if (!baseline_file.empty() || !ctx_file.empty()) {
            if (baseline_file.empty() || ctx_file.empty()) throw UsageError("--baseline and --ctx go together");
            auto table = format_paired_report(report_from_file(text::read_file(baseline_file)),
                                              report_from_file(text::read_file(ctx_file)));
            std::fwrite(table.data(), 1, table.size(), stdout);
            return 0;
        }
        auto cfg = resolve(c);
        auto res = run_pipeline(cfg);
        print_report(res.val);
        print_report(res.test);
        auto table = format_paired_report(*res.baseline_test, res.test);
        std::fwrite(table.data(), 1, table.size(), stdout);
        return 0;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ctxrec::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
