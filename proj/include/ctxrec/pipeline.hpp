#pragma once

// End-to-end run: load -> targets -> temporal split -> negative sampling ->
// one feature replay -> train or fit -> evaluate -> write artifacts.
// Every artifact is a pure function of (inputs, RunConfig).

#include <array>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrec/core_data.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/eval.hpp"
#include "ctxrec/feature_engine.hpp"
#include "ctxrec/gbdt.hpp"
#include "ctxrec/random.hpp"
#include "ctxrec/rankers.hpp"
#include "ctxrec/text.hpp"
#include "json.hpp"

namespace ctxrec {

// ---------------------------------------------------------------------------
// Model selection
// ---------------------------------------------------------------------------

enum class ModelKind { Naive, Content, Linear, Mlp, Gbdt };

struct ModelSpec {
    ModelKind kind = ModelKind::Content;
    Feature feature = Feature::Ctr;  // Naive only

    bool trainable() const { return kind == ModelKind::Linear || kind == ModelKind::Mlp || kind == ModelKind::Gbdt; }

    std::string name() const {
        switch (kind) {
            case ModelKind::Naive: return "naive-" + std::string(to_string(feature));
            case ModelKind::Content: return "content";
            case ModelKind::Linear: return "content+linear";
            case ModelKind::Mlp: return "content+mlp";
            case ModelKind::Gbdt: return "gbdt";
        }
        return {};
    }
};

inline ModelSpec parse_model_spec(std::string_view s) {
    if (s == "content") return {ModelKind::Content};
    if (s == "content+linear") return {ModelKind::Linear};
    if (s == "content+mlp") return {ModelKind::Mlp};
    if (s == "gbdt") return {ModelKind::Gbdt};
    for (auto f : kAllFeatures) {
        if (s == "naive-" + std::string(to_string(f))) return {ModelKind::Naive, f};
    }
    throw UsageError("unknown model '" + std::string(s) + "'");
}

inline NegativeScheme parse_negative_scheme(std::string_view s) {
    if (s == "impression") return NegativeScheme::Impression;
    if (s == "recent-queue") return NegativeScheme::RecentQueue;
    throw UsageError("unknown negative scheme '" + std::string(s) + "' (expected impression or recent-queue)");
}

/// Parses `5,10`; every k must be >= 1.
inline std::vector<std::size_t> parse_k_list(std::string_view s) {
    std::vector<std::size_t> ks;
    for (auto part : text::split(s, ',')) {
        auto v = text::parse_int(text::trim(part));
        if (!v || *v < 1) throw UsageError("bad k list '" + std::string(s) + "'");
        ks.push_back(static_cast<std::size_t>(*v));
    }
    if (ks.empty()) throw UsageError("empty k list");
    return ks;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunPaths {
    std::string log;
    std::string catalog;
    std::string embeddings;
    /// Optional `impression_id,item_id,logit` table overriding the content scorer.
    std::string content_logits;
    std::string out;
};

struct RunConfig {
    RunPaths paths;
    std::uint64_t seed = 42;
    bool strict = false;
    ModelSpec model;
    /// Unset: impression negatives when the log has impressions, else recent-queue.
    std::optional<NegativeScheme> scheme;
    FeatureEngineConfig engine;
    TrainConfig train;
    std::size_t hidden = 32;
    bool missing_indicators = true;
    std::array<double, kNumFeatures> fill{};
    gbdt::GbdtConfig gbdt;
    SplitSpec split;
    EvalConfig eval{{5, 10}, true};
    /// Recent-queue negatives per evaluation target.
    std::size_t eval_negatives = 20;
    Timestamp window = 600;
    std::size_t history_limit = 50;

    void validate() const {
        engine.validate();
        train.validate();
        gbdt.validate();
        split.validate();
        if (eval.ks.empty()) throw UsageError("at least one k is required");
        if (eval_negatives < 1) throw UsageError("eval negatives must be >= 1");
        if (window <= 0) throw UsageError("recent-queue window must be positive");
        if (hidden < 1) throw UsageError("hidden width must be >= 1");
        if (history_limit < 1) throw UsageError("history limit must be >= 1");
    }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// JSON run configuration. Absent keys keep their defaults.
inline RunConfig parse_run_config(std::string_view json_text, RunConfig cfg = {}) {
    using nlohmann::json;
    try {
        auto j = json::parse(json_text);
        if (!j.is_object()) throw UsageError("config must be a JSON object");
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            detail::read_opt(p, "log", cfg.paths.log);
            detail::read_opt(p, "catalog", cfg.paths.catalog);
            detail::read_opt(p, "embeddings", cfg.paths.embeddings);
            detail::read_opt(p, "content_logits", cfg.paths.content_logits);
            detail::read_opt(p, "out", cfg.paths.out);
        }
        detail::read_opt(j, "seed", cfg.seed);
        detail::read_opt(j, "strict", cfg.strict);
        if (j.contains("model")) cfg.model = parse_model_spec(j.at("model").get<std::string>());
        if (j.contains("neg_scheme")) {
            auto s = j.at("neg_scheme").get<std::string>();
            cfg.scheme = s == "auto" ? std::nullopt : std::optional(parse_negative_scheme(s));
        }
        if (j.contains("engine")) {
            const auto& e = j.at("engine");
            detail::read_opt(e, "alpha", cfg.engine.alpha);
            detail::read_opt(e, "prior_clicks", cfg.engine.prior_clicks);
            detail::read_opt(e, "prior_impressions", cfg.engine.prior_impressions);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            detail::read_opt(t, "negatives", cfg.train.negatives_per_positive);
            detail::read_opt(t, "step_size", cfg.train.step_size);
            detail::read_opt(t, "momentum", cfg.train.momentum);
            detail::read_opt(t, "epochs", cfg.train.epochs);
            detail::read_opt(t, "batch_size", cfg.train.batch_size);
            detail::read_opt(t, "hidden", cfg.hidden);
            detail::read_opt(t, "missing_indicators", cfg.missing_indicators);
            detail::read_opt(t, "history_limit", cfg.history_limit);
            if (t.contains("fill")) {
                auto v = t.at("fill").get<std::vector<double>>();
                if (v.size() != kNumFeatures) throw UsageError("train.fill needs 4 values");
                std::copy(v.begin(), v.end(), cfg.fill.begin());
            }
            if (t.contains("loss")) {
                auto l = t.at("loss").get<std::string>();
                if (l == "softmax") {
                    cfg.train.loss = LossKind::SoftmaxOverCandidates;
                } else if (l == "bce") {
                    cfg.train.loss = LossKind::PointwiseBCE;
                } else {
                    throw UsageError("train.loss must be softmax or bce");
                }
            }
        }
        if (j.contains("gbdt")) {
            const auto& g = j.at("gbdt");
            detail::read_opt(g, "num_trees", cfg.gbdt.num_trees);
            detail::read_opt(g, "max_depth", cfg.gbdt.max_depth);
            detail::read_opt(g, "learning_rate", cfg.gbdt.learning_rate);
            detail::read_opt(g, "min_leaf_count", cfg.gbdt.min_leaf_count);
            detail::read_opt(g, "lambda", cfg.gbdt.lambda);
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            detail::read_opt(s, "train", cfg.split.train);
            detail::read_opt(s, "val", cfg.split.val);
            detail::read_opt(s, "test", cfg.split.test);
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            detail::read_opt(e, "ks", cfg.eval.ks);
            detail::read_opt(e, "negatives", cfg.eval_negatives);
            detail::read_opt(e, "window", cfg.window);
            detail::read_opt(e, "per_target", cfg.eval.keep_per_target);
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Runs `fn`, prefixing any failure with the stage name.
template <class Fn>
auto run_stage(std::string_view name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw_error(e.kind(), "stage " + std::string(name) + ": " + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        throw DataError("stage " + std::string(name) + ": " + e.what());
    }
}

/// Observation points for instrumentation; training code reports every
/// target it reads.
struct RunHooks {
    std::function<void(const EvalTarget&)> on_training_target;
};

/// Everything a model needs after the data stages.
struct PreparedRun {
    Dataset dataset;
    ParseStats parse;
    FeatureEngineConfig engine;
    NegativeScheme scheme = NegativeScheme::Impression;
    SamplerStats sampler;
    Splits splits;
    TargetFeatures train_features;
    TargetFeatures val_features;
    TargetFeatures test_features;
    UserHistoryIndex history;
    ContentScorer content;
};

inline std::unique_ptr<PreparedRun> prepare_run(const RunConfig& cfg) {
    cfg.validate();
    auto run = std::make_unique<PreparedRun>();
    run_stage("load", [&] {
        if (cfg.paths.log.empty()) throw UsageError("no event log given");
        ParseOptions opt;
        opt.strict = cfg.strict;
        run->dataset = load_dataset({cfg.paths.log, cfg.paths.catalog, cfg.paths.embeddings}, opt, &run->parse);
        run->engine = config_for(run->dataset, cfg.engine);
    });
    run_stage("targets", [&] {
        run->scheme = cfg.scheme.value_or(run->dataset.has_impressions() ? NegativeScheme::Impression
                                                                         : NegativeScheme::RecentQueue);
        auto targets = build_targets(run->dataset, run->scheme, &run->sampler, cfg.window);
        run->splits = temporal_split(std::move(targets), cfg.split);
        Rng train_rng(derive_seed(cfg.seed, "train-negatives"));
        run->splits.train = subsample_negatives(std::move(run->splits.train), cfg.train.negatives_per_positive, train_rng);
        if (run->scheme == NegativeScheme::RecentQueue) {
            Rng eval_rng(derive_seed(cfg.seed, "eval-negatives"));
            run->splits.val = subsample_negatives(std::move(run->splits.val), cfg.eval_negatives, eval_rng);
            run->splits.test = subsample_negatives(std::move(run->splits.test), cfg.eval_negatives, eval_rng);
        }
    });
    run_stage("features", [&] {
        std::vector<EvalTarget> all;
        all.reserve(run->splits.train.size() + run->splits.val.size() + run->splits.test.size());
        for (const auto* part : {&run->splits.train, &run->splits.val, &run->splits.test}) {
            all.insert(all.end(), part->begin(), part->end());
        }
        auto rows = compute_target_features(run->dataset, all, run->engine);
        auto a = rows.begin();
        auto b = a + static_cast<std::ptrdiff_t>(run->splits.train.size());
        auto c = b + static_cast<std::ptrdiff_t>(run->splits.val.size());
        run->train_features.assign(std::make_move_iterator(a), std::make_move_iterator(b));
        run->val_features.assign(std::make_move_iterator(b), std::make_move_iterator(c));
        run->test_features.assign(std::make_move_iterator(c), std::make_move_iterator(rows.end()));
    });
    run_stage("content", [&] {
        run->history = UserHistoryIndex(run->dataset);
        run->content = ContentScorer(run->dataset, cfg.history_limit);
        if (!cfg.paths.content_logits.empty()) {
            run->content.set_logit_table(parse_logit_table(text::read_file(cfg.paths.content_logits)));
        }
    });
    return run;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Ranks by the boosted margin over raw (unscaled) context features.
class GbdtScorer final : public Scorer {
public:
    explicit GbdtScorer(gbdt::GbdtModel model) : model_(std::move(model)) {}
    double score(const ScoreRequest& req) const override {
        if (!req.context) throw UsageError("gbdt scorer requires a context vector");
        double s = model_.raw_score(gbdt::row_from_context(*req.context));
        if (!std::isfinite(s)) throw NumericError("gbdt score is not finite");
        return s;
    }
    std::string name() const override { return "gbdt"; }

private:
    gbdt::GbdtModel model_;
};

struct TrainedModel {
    ModelSpec spec;
    std::optional<CombinerModel> combiner;
    std::array<double, kNumFeatures> fill{};
    std::optional<gbdt::GbdtModel> booster;
    /// Combiner: mean loss per epoch. GBDT: base logloss then one per tree.
    std::vector<double> loss_curve;
};

inline std::vector<TrainingGroup> training_groups(const RunConfig& cfg, const PreparedRun& run, const RunHooks& hooks) {
    std::vector<TrainingGroup> groups;
    groups.reserve(run.splits.train.size());
    for (std::size_t t = 0; t < run.splits.train.size(); ++t) {
        const auto& target = run.splits.train[t];
        if (target.negatives.empty()) continue;
        if (hooks.on_training_target) hooks.on_training_target(target);
        auto hist = run.history.before(target.user_id, target.timestamp);
        TrainingGroup g;
        for (std::size_t c = 0; c <= target.negatives.size(); ++c) {
            const std::string& item = c == 0 ? target.positive : target.negatives[c - 1];
            const auto& cv = run.train_features[t][c];
            g.content_logits.push_back(
                run.content.score(ScoreRequest{hist, item, target.timestamp, &cv, target.impression_id}));
            g.features.push_back(scale_context(cv, cfg.fill));
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

inline std::vector<gbdt::FeatureRow> training_rows(const PreparedRun& run, const RunHooks& hooks) {
    std::vector<gbdt::FeatureRow> rows;
    for (std::size_t t = 0; t < run.splits.train.size(); ++t) {
        const auto& target = run.splits.train[t];
        if (target.negatives.empty()) continue;
        if (hooks.on_training_target) hooks.on_training_target(target);
        for (std::size_t c = 0; c <= target.negatives.size(); ++c) {
            rows.push_back(gbdt::row_from_context(run.train_features[t][c], c == 0 ? 1 : 0));
        }
    }
    return rows;
}

inline TrainedModel train_model(const RunConfig& cfg, const PreparedRun& run, const RunHooks& hooks = {}) {
    TrainedModel out;
    out.spec = cfg.model;
    out.fill = cfg.fill;
    if (!cfg.model.trainable()) return out;
    return run_stage("train", [&] {
        if (cfg.model.kind == ModelKind::Gbdt) {
            auto rows = training_rows(run, hooks);
            auto fitted = gbdt::fit(rows, cfg.gbdt);
            out.loss_curve.push_back(fitted.initial_logloss);
            out.loss_curve.insert(out.loss_curve.end(), fitted.train_logloss.begin(), fitted.train_logloss.end());
            out.booster = std::move(fitted.model);
            return out;
        }
        auto mode = cfg.model.kind == ModelKind::Linear ? CombinerMode::LinearNaive : CombinerMode::MlpModule;
        CombinerModel model(mode, cfg.hidden, cfg.missing_indicators);
        if (mode == CombinerMode::MlpModule) model.init_random(derive_seed(cfg.seed, "init"));
        auto groups = training_groups(cfg, run, hooks);
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, "sgd");
        auto result = train(std::move(model), groups, tc);
        out.combiner = std::move(result.model);
        out.loss_curve = std::move(result.loss_curve);
        return out;
    });
}

inline std::unique_ptr<Scorer> make_scorer(const TrainedModel& m, const PreparedRun& run) {
    switch (m.spec.kind) {
        case ModelKind::Naive: return std::make_unique<NaiveScorer>(NaiveRanker{m.spec.feature});
        case ModelKind::Content: return std::make_unique<ContentScorer>(run.content);
        case ModelKind::Linear:
        case ModelKind::Mlp:
            if (!m.combiner) throw UsageError(m.spec.name() + " has no trained parameters");
            return std::make_unique<CombinedScorer>(run.content, *m.combiner, m.fill);
        case ModelKind::Gbdt:
            if (!m.booster) throw UsageError("gbdt has no trained trees");
            return std::make_unique<GbdtScorer>(*m.booster);
    }
    throw UsageError("unknown model kind");
}

inline std::string serialize_model(const TrainedModel& m) {
    if (m.combiner) return serialize_combiner(*m.combiner, m.fill);
    if (m.booster) return gbdt::dump(*m.booster);
    throw UsageError(m.spec.name() + " has no parameters to save");
}

inline TrainedModel parse_model(const ModelSpec& spec, std::string_view content) {
    TrainedModel m;
    m.spec = spec;
    if (spec.kind == ModelKind::Gbdt) {
        m.booster = gbdt::load(content);
    } else if (spec.kind == ModelKind::Linear || spec.kind == ModelKind::Mlp) {
        auto loaded = parse_combiner(content);
        auto want = spec.kind == ModelKind::Linear ? CombinerMode::LinearNaive : CombinerMode::MlpModule;
        if (loaded.model.mode() != want) throw DataError("model file does not hold a " + spec.name() + " model");
        m.combiner = std::move(loaded.model);
        m.fill = loaded.fill;
    } else {
        throw UsageError(spec.name() + " does not load a model file");
    }
    return m;
}

inline std::string format_loss_curve(const TrainedModel& m) {
    std::string out = m.booster ? "tree,logloss\n" : "epoch,loss\n";
    for (std::size_t i = 0; i < m.loss_curve.size(); ++i) {
        out += std::to_string(m.booster ? i : i + 1) + "," + text::fmt9(m.loss_curve[i]) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation and reports
// ---------------------------------------------------------------------------

inline EvalReport evaluate_split(const Scorer& scorer, const PreparedRun& run, std::string_view split,
                                 const EvalConfig& cfg) {
    return run_stage("evaluate", [&] {
        const bool val = split == "val";
        const auto& targets = val ? run.splits.val : run.splits.test;
        const auto& features = val ? run.val_features : run.test_features;
        auto report = evaluate_with_features(scorer, targets, features, run.history, cfg);
        report.split = std::string(split);
        return report;
    });
}

/// Baseline vs +CTX table with a relative-improvement column (percent).
inline std::string format_paired_report(const EvalReport& baseline, const EvalReport& ctx) {
    if (baseline.ks != ctx.ks) throw UsageError("paired report: k sets differ");
    std::string out = "metric," + baseline.model + "," + ctx.model + ",improv_pct\n";
    auto row = [&](const std::string& name, double b, double c) {
        std::string improv = b != 0.0 ? text::fmt9((c - b) / b * 100.0) : "";
        out += name + "," + text::fmt9(b) + "," + text::fmt9(c) + "," + improv + "\n";
    };
    row("auc", baseline.auc, ctx.auc);
    for (std::size_t i = 0; i < baseline.ks.size(); ++i) {
        row("ndcg@" + std::to_string(baseline.ks[i]), baseline.ndcg[i], ctx.ndcg[i]);
    }
    for (std::size_t i = 0; i < baseline.ks.size(); ++i) {
        row("recall@" + std::to_string(baseline.ks[i]), baseline.recall[i], ctx.recall[i]);
    }
    return out;
}

/// Rebuilds an EvalReport from a report file written by format_report.
inline EvalReport report_from_file(std::string_view content) {
    auto kv = parse_report(content);
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError("report is missing '" + key + "'");
        return it->second;
    };
    auto num = [&](const std::string& key) {
        auto v = text::parse_double(get(key));
        if (!v) throw DataError("report value '" + key + "' is not a number");
        return *v;
    };
    EvalReport r;
    r.model = get("model");
    if (kv.count("split")) r.split = kv.at("split");
    r.count = static_cast<std::size_t>(num("targets"));
    r.dropped = static_cast<std::size_t>(num("dropped"));
    r.auc = num("auc.mean");
    for (const auto& [key, value] : kv) {
        const std::string prefix = "ndcg@";
        const std::string suffix = ".mean";
        if (key.rfind(prefix, 0) == 0 && key.size() > prefix.size() + suffix.size() &&
            key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0) {
            auto k = text::parse_int(std::string_view(key).substr(prefix.size(), key.size() - prefix.size() - suffix.size()));
            if (k) r.ks.push_back(static_cast<std::size_t>(*k));
        }
    }
    std::sort(r.ks.begin(), r.ks.end());
    for (auto k : r.ks) {
        r.ndcg.push_back(num("ndcg@" + std::to_string(k) + ".mean"));
        r.recall.push_back(num("recall@" + std::to_string(k) + ".mean"));
    }
    return r;
}

struct PipelineResult {
    TrainedModel model;
    EvalReport val;
    EvalReport test;
    std::optional<EvalReport> baseline_test;
};

inline void write_artifact(const RunConfig& cfg, const std::string& name, std::string_view content) {
    if (cfg.paths.out.empty()) return;
    std::filesystem::create_directories(cfg.paths.out);
    text::write_file((std::filesystem::path(cfg.paths.out) / name).string(), content);
}

/// Trains the configured model (when trainable) and writes model.txt,
/// loss_curve.csv and report_val.txt.
inline PipelineResult run_train(const RunConfig& cfg, const PreparedRun& run, const RunHooks& hooks = {}) {
    PipelineResult res;
    res.model = train_model(cfg, run, hooks);
    auto scorer = make_scorer(res.model, run);
    res.val = evaluate_split(*scorer, run, "val", cfg.eval);
    run_stage("write", [&] {
        if (cfg.model.trainable()) {
            write_artifact(cfg, "model.txt", serialize_model(res.model));
            write_artifact(cfg, "loss_curve.csv", format_loss_curve(res.model));
        }
        write_artifact(cfg, "report_val.txt", format_report(res.val));
    });
    return res;
}

/// Evaluates a model on the test split; writes report_test.txt and,
/// when enabled, per_target_test.csv.
inline EvalReport run_evaluate(const RunConfig& cfg, const PreparedRun& run, const TrainedModel& model) {
    auto scorer = make_scorer(model, run);
    auto report = evaluate_split(*scorer, run, "test", cfg.eval);
    run_stage("write", [&] {
        write_artifact(cfg, "report_test.txt", format_report(report));
        if (cfg.eval.keep_per_target) write_artifact(cfg, "per_target_test.csv", format_per_target(report));
    });
    return report;
}

/// Full run: train, evaluate val and test, then evaluate the content
/// baseline on test and write paired_report.csv.
inline PipelineResult run_pipeline(const RunConfig& cfg, const RunHooks& hooks = {}) {
    auto run = prepare_run(cfg);
    auto res = run_train(cfg, *run, hooks);
    res.test = run_evaluate(cfg, *run, res.model);
    ContentScorer baseline = run->content;
    EvalConfig plain = cfg.eval;
    plain.keep_per_target = false;
    res.baseline_test = evaluate_split(baseline, *run, "test", plain);
    run_stage("write", [&] {
        write_artifact(cfg, "report_test_baseline.txt", format_report(*res.baseline_test));
        write_artifact(cfg, "paired_report.csv", format_paired_report(*res.baseline_test, res.test));
    });
    return res;
}

}  // namespace ctxrec
