#pragma once

// Scoring models: naive contextual rankers, a mean-pooled embedding content
// scorer, and the two ways of attaching scaled context to a content logit
// (per-feature linear terms, or a one-hidden-layer MLP).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctxrec/core_data.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/feature_engine.hpp"
#include "ctxrec/random.hpp"
#include "ctxrec/text.hpp"

namespace ctxrec {

// ---------------------------------------------------------------------------
// Feature scaling
// ---------------------------------------------------------------------------

/// Identity for CTR, ln(1+x) for the count/time features.
inline double scale(Feature f, double raw) {
    if (!(raw >= 0.0)) throw DataError("cannot scale negative or NaN value for " + std::string(to_string(f)));
    return f == Feature::Ctr ? raw : std::log1p(raw);
}

struct ScaledFeatures {
    std::array<double, kNumFeatures> values{};
    std::array<bool, kNumFeatures> mask{};
};

/// Scales every available feature; unavailable ones take `fill` (post-scaling).
inline ScaledFeatures scale_context(const ContextVector& cv, const std::array<double, kNumFeatures>& fill = {}) {
    ScaledFeatures out;
    for (auto f : kAllFeatures) {
        auto i = static_cast<std::size_t>(f);
        out.mask[i] = cv.available(f);
        out.values[i] = out.mask[i] ? scale(f, cv.raw(f)) : fill[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

/// Indices of `items` by descending logit; ties by ascending item id.
inline std::vector<std::size_t> rank_order(std::span<const std::string> items, std::span<const double> logits) {
    if (items.size() != logits.size()) throw UsageError("rank_order: size mismatch");
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (logits[a] != logits[b]) return logits[a] > logits[b];
        return items[a] < items[b];
    });
    return order;
}

// ---------------------------------------------------------------------------
// Scorer interface
// ---------------------------------------------------------------------------

struct HistoryEntry {
    std::string item_id;
    Timestamp t = 0;
};

struct ScoreRequest {
    std::span<const HistoryEntry> history;
    std::string_view candidate;
    Timestamp t = 0;
    const ContextVector* context = nullptr;
    std::string_view impression_id;
};

/// Maps (history, candidate, time, context) to a logit. Implementations are
/// deterministic and safe to call concurrently once constructed.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual double score(const ScoreRequest& req) const = 0;
    virtual std::string name() const = 0;
};

/// Per-user click histories, time-sorted, for prefix lookups.
class UserHistoryIndex {
public:
    UserHistoryIndex() = default;

    explicit UserHistoryIndex(const Dataset& ds) {
        for (const auto& e : ds.events) {
            if (e.action == Action::Click) by_user_[e.user_id].push_back({e.item_id, e.timestamp});
        }
    }

    /// Clicks of `user` with timestamp strictly before `t`.
    std::span<const HistoryEntry> before(std::string_view user, Timestamp t) const {
        auto it = by_user_.find(user);
        if (it == by_user_.end()) return {};
        const auto& v = it->second;
        auto end = std::lower_bound(v.begin(), v.end(), t, [](const HistoryEntry& h, Timestamp ts) { return h.t < ts; });
        return {v.data(), static_cast<std::size_t>(end - v.begin())};
    }

private:
    std::map<std::string, std::vector<HistoryEntry>, std::less<>> by_user_;
};

// ---------------------------------------------------------------------------
// Naive rankers
// ---------------------------------------------------------------------------

struct NaiveRanker {
    Feature feature = Feature::Ctr;
    /// Logit for candidates whose feature is unavailable.
    double floor = std::numeric_limits<double>::lowest();
};

/// Raw feature value as the logit; negated for freshness (fresher first).
inline double score_naive(const NaiveRanker& ranker, const ContextVector& cv) {
    if (!cv.available(ranker.feature)) return ranker.floor;
    double v = cv.raw(ranker.feature);
    return ranker.feature == Feature::Freshness ? -v : v;
}

class NaiveScorer final : public Scorer {
public:
    explicit NaiveScorer(NaiveRanker ranker) : ranker_(ranker) {}
    double score(const ScoreRequest& req) const override {
        if (!req.context) throw UsageError("naive scorer requires a context vector");
        return score_naive(ranker_, *req.context);
    }
    std::string name() const override { return "naive-" + std::string(to_string(ranker_.feature)); }

private:
    NaiveRanker ranker_;
};

// ---------------------------------------------------------------------------
// Content scorer
// ---------------------------------------------------------------------------

/// Stand-in for a learned news/user encoder: the user vector is the
/// unweighted mean of the most recent history embeddings and the logit is
/// its dot product with the candidate embedding. A precomputed logit for
/// (impression_id, item_id) overrides the embedding path.
class ContentScorer final : public Scorer {
public:
    using LogitTable = std::map<std::pair<std::string, std::string>, double, std::less<>>;

    ContentScorer() = default;

    explicit ContentScorer(const Dataset& ds, std::size_t history_limit = 50) : history_limit_(history_limit) {
        dim_ = ds.embedding_dim;
        for (const auto& [id, meta] : ds.catalog) {
            if (meta.embedding) {
                if (dim_ == 0) dim_ = meta.embedding->size();
                if (meta.embedding->size() == dim_) embeddings_.emplace(id, *meta.embedding);
            }
        }
    }

    void set_logit_table(LogitTable table) { table_ = std::move(table); }
    const LogitTable& logit_table() const { return table_; }
    std::size_t dim() const { return dim_; }

    std::vector<double> user_vector(std::span<const HistoryEntry> history) const {
        std::vector<double> u(dim_, 0.0);
        std::size_t used = 0;
        std::size_t start = history.size() > history_limit_ ? history.size() - history_limit_ : 0;
        for (std::size_t i = start; i < history.size(); ++i) {
            auto it = embeddings_.find(history[i].item_id);
            if (it == embeddings_.end()) continue;
            for (std::size_t d = 0; d < dim_; ++d) u[d] += it->second[d];
            ++used;
        }
        if (used > 0) {
            for (auto& x : u) x /= static_cast<double>(used);
        }
        return u;
    }

    double score(const ScoreRequest& req) const override {
        if (!table_.empty() && !req.impression_id.empty()) {
            auto it = table_.find(std::make_pair(std::string(req.impression_id), std::string(req.candidate)));
            if (it != table_.end()) return it->second;
        }
        auto it = embeddings_.find(req.candidate);
        if (it == embeddings_.end() || dim_ == 0) return 0.0;
        auto u = user_vector(req.history);
        double s = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) s += u[d] * it->second[d];
        return s;
    }

    std::string name() const override { return "content"; }

private:
    std::size_t history_limit_ = 50;
    std::size_t dim_ = 0;
    std::map<std::string, std::vector<double>, std::less<>> embeddings_;
    LogitTable table_;
};

/// `impression_id,item_id,logit` CSV.
inline ContentScorer::LogitTable parse_logit_table(std::string_view content) {
    ContentScorer::LogitTable table;
    text::for_each_line(content, [&](std::string_view line, std::size_t lineno) {
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#' || t.rfind("impression_id", 0) == 0) return;
        auto f = text::split(t, ',');
        std::optional<double> v;
        if (f.size() == 3) v = text::parse_double(text::trim(f[2]));
        if (!v) throw DataError("malformed content-logit line " + std::to_string(lineno));
        table[{std::string(text::trim(f[0])), std::string(text::trim(f[1]))}] = *v;
    });
    return table;
}

// ---------------------------------------------------------------------------
// Combiner model
// ---------------------------------------------------------------------------

enum class CombinerMode { LinearNaive, MlpModule };

/// Parameters live in one flat vector so training and gradient checking
/// treat every mode uniformly. Layout:
///   [0] w_content  [1] bias  [2..5] missing-indicator weights
///   LinearNaive: [6..9] per-feature weights
///   MlpModule:   [6] w_ctx, then W1 (H x 4, row-major), b1 (H), w2 (H), b2
class CombinerModel {
public:
    static constexpr std::size_t kContent = 0;
    static constexpr std::size_t kBias = 1;
    static constexpr std::size_t kMissing = 2;
    static constexpr std::size_t kHead = kMissing + kNumFeatures;

    CombinerModel() : CombinerModel(CombinerMode::LinearNaive) {}

    explicit CombinerModel(CombinerMode mode, std::size_t hidden = 32, bool missing_indicators = true)
        : mode_(mode), hidden_(mode == CombinerMode::MlpModule ? hidden : 0), missing_indicators_(missing_indicators) {
        if (mode == CombinerMode::MlpModule && hidden == 0) throw UsageError("MLP hidden width must be >= 1");
        params_.assign(parameter_count(), 0.0);
        params_[kContent] = 1.0;
        if (mode == CombinerMode::MlpModule) params_[kHead] = 1.0;
    }

    /// Uniform init scaled by fan-in for the MLP weights; other weights keep
    /// their defaults (w_content = w_ctx = 1, everything else 0).
    void init_random(std::uint64_t seed) {
        if (mode_ != CombinerMode::MlpModule) return;
        Rng rng(seed);
        std::uniform_real_distribution<double> in_dist(-1.0 / std::sqrt(double(kNumFeatures)),
                                                       1.0 / std::sqrt(double(kNumFeatures)));
        std::uniform_real_distribution<double> out_dist(-1.0 / std::sqrt(double(hidden_)), 1.0 / std::sqrt(double(hidden_)));
        for (std::size_t j = 0; j < hidden_ * kNumFeatures; ++j) params_[w1_offset() + j] = in_dist(rng);
        for (std::size_t j = 0; j < hidden_; ++j) params_[w2_offset() + j] = out_dist(rng);
    }

    CombinerMode mode() const { return mode_; }
    std::size_t hidden() const { return hidden_; }
    bool missing_indicators() const { return missing_indicators_; }

    std::size_t parameter_count() const {
        if (mode_ == CombinerMode::LinearNaive) return kHead + kNumFeatures;
        return kHead + 1 + hidden_ * kNumFeatures + hidden_ + hidden_ + 1;
    }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    double& w_content() { return params_[kContent]; }
    double& bias() { return params_[kBias]; }
    double& missing_weight(Feature f) { return params_[kMissing + static_cast<std::size_t>(f)]; }
    double& linear_weight(Feature f) {
        require(CombinerMode::LinearNaive);
        return params_[kHead + static_cast<std::size_t>(f)];
    }
    double& w_ctx() {
        require(CombinerMode::MlpModule);
        return params_[kHead];
    }
    double& w1(std::size_t j, Feature f) {
        require(CombinerMode::MlpModule);
        return params_[w1_offset() + j * kNumFeatures + static_cast<std::size_t>(f)];
    }
    double& b1(std::size_t j) {
        require(CombinerMode::MlpModule);
        return params_[b1_offset() + j];
    }
    double& w2(std::size_t j) {
        require(CombinerMode::MlpModule);
        return params_[w2_offset() + j];
    }
    double& b2() {
        require(CombinerMode::MlpModule);
        return params_[b2_offset()];
    }

    /// Parameters that training may change.
    bool trainable(std::size_t i) const {
        if (i >= kMissing && i < kHead) return missing_indicators_;
        return true;
    }

    /// Input to hidden unit j before the ReLU (MlpModule only).
    double hidden_preactivation(std::size_t j, const ScaledFeatures& x) const {
        require(CombinerMode::MlpModule);
        return preactivation(j, x);
    }

    /// MLP output for scaled features (MlpModule only).
    double mlp_output(const ScaledFeatures& x) const {
        double o = params_[b2_offset()];
        for (std::size_t j = 0; j < hidden_; ++j) o += params_[w2_offset() + j] * std::max(0.0, preactivation(j, x));
        return o;
    }

    /// Logit; when `grad` is non-empty, adds upstream * d(logit)/d(param).
    double forward(double content_logit, const ScaledFeatures& x, std::span<double> grad = {},
                   double upstream = 1.0) const {
        const bool want_grad = !grad.empty();
        double s = params_[kContent] * content_logit + params_[kBias];
        if (want_grad) {
            grad[kContent] += upstream * content_logit;
            grad[kBias] += upstream;
        }
        if (missing_indicators_) {
            for (std::size_t i = 0; i < kNumFeatures; ++i) {
                if (x.mask[i]) continue;
                s += params_[kMissing + i];
                if (want_grad) grad[kMissing + i] += upstream;
            }
        }
        if (mode_ == CombinerMode::LinearNaive) {
            for (std::size_t i = 0; i < kNumFeatures; ++i) {
                s += params_[kHead + i] * x.values[i];
                if (want_grad) grad[kHead + i] += upstream * x.values[i];
            }
            return s;
        }
        const double w_ctx = params_[kHead];
        double o = params_[b2_offset()];
        for (std::size_t j = 0; j < hidden_; ++j) {
            double pre = preactivation(j, x);
            double h = pre > 0.0 ? pre : 0.0;
            double w2 = params_[w2_offset() + j];
            o += w2 * h;
            if (want_grad) {
                grad[w2_offset() + j] += upstream * w_ctx * h;
                if (pre > 0.0) {
                    double back = upstream * w_ctx * w2;
                    grad[b1_offset() + j] += back;
                    for (std::size_t i = 0; i < kNumFeatures; ++i) {
                        grad[w1_offset() + j * kNumFeatures + i] += back * x.values[i];
                    }
                }
            }
        }
        if (want_grad) {
            grad[kHead] += upstream * o;
            grad[b2_offset()] += upstream * w_ctx;
        }
        return s + w_ctx * o;
    }

    bool operator==(const CombinerModel&) const = default;

private:
    void require(CombinerMode m) const {
        if (mode_ != m) throw UsageError("parameter not defined for this combiner mode");
    }
    std::size_t w1_offset() const { return kHead + 1; }
    std::size_t b1_offset() const { return w1_offset() + hidden_ * kNumFeatures; }
    std::size_t w2_offset() const { return b1_offset() + hidden_; }
    std::size_t b2_offset() const { return w2_offset() + hidden_; }

    double preactivation(std::size_t j, const ScaledFeatures& x) const {
        double pre = params_[b1_offset() + j];
        const double* row = &params_[w1_offset() + j * kNumFeatures];
        for (std::size_t i = 0; i < kNumFeatures; ++i) pre += row[i] * x.values[i];
        return pre;
    }

    CombinerMode mode_;
    std::size_t hidden_;
    bool missing_indicators_;
    std::vector<double> params_;
};

inline double score_combined(const CombinerModel& model, double content_logit, const ScaledFeatures& x) {
    double s = model.forward(content_logit, x);
    if (!std::isfinite(s)) throw NumericError("combined score is not finite");
    return s;
}

/// Content scorer plus a combiner over the scaled context.
class CombinedScorer final : public Scorer {
public:
    CombinedScorer(const ContentScorer& content, CombinerModel model, std::array<double, kNumFeatures> fill = {})
        : content_(&content), model_(std::move(model)), fill_(fill) {}

    double score(const ScoreRequest& req) const override {
        if (!req.context) throw UsageError("combined scorer requires a context vector");
        return score_combined(model_, content_->score(req), scale_context(*req.context, fill_));
    }
    std::string name() const override {
        return model_.mode() == CombinerMode::LinearNaive ? "content+linear" : "content+mlp";
    }
    const CombinerModel& model() const { return model_; }

private:
    const ContentScorer* content_;
    CombinerModel model_;
    std::array<double, kNumFeatures> fill_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class LossKind { SoftmaxOverCandidates, PointwiseBCE };

struct TrainConfig {
    std::size_t negatives_per_positive = 4;
    LossKind loss = LossKind::SoftmaxOverCandidates;
    double step_size = 0.05;
    double momentum = 0.0;
    std::size_t epochs = 5;
    std::size_t batch_size = 64;
    std::uint64_t seed = 42;

    void validate() const {
        if (negatives_per_positive < 1) throw UsageError("negatives per positive must be >= 1");
        if (!(step_size > 0.0)) throw UsageError("step size must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("momentum must be in [0, 1)");
        if (epochs == 0 || batch_size == 0) throw UsageError("epochs and batch size must be >= 1");
    }
};

/// One positive (index 0) and its negatives, with model inputs precomputed.
struct TrainingGroup {
    std::vector<double> content_logits;
    std::vector<ScaledFeatures> features;
};

namespace detail {

inline double log_sum_exp(std::span<const double> s) {
    double m = *std::max_element(s.begin(), s.end());
    double acc = 0.0;
    for (double v : s) acc += std::exp(v - m);
    return m + std::log(acc);
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

/// Loss of one group; with non-empty `grad`, adds `weight` * d(loss)/d(param).
inline double group_loss(const CombinerModel& model, const TrainingGroup& g, LossKind loss, std::span<double> grad = {},
                         double weight = 1.0) {
    const std::size_t n = g.content_logits.size();
    if (n == 0 || g.features.size() != n) throw UsageError("malformed training group");
    std::vector<double> s(n);
    for (std::size_t j = 0; j < n; ++j) s[j] = model.forward(g.content_logits[j], g.features[j]);

    double value = 0.0;
    std::vector<double> dl_ds(n);
    if (loss == LossKind::SoftmaxOverCandidates) {
        double lse = detail::log_sum_exp(s);
        value = lse - s[0];
        for (std::size_t j = 0; j < n; ++j) dl_ds[j] = std::exp(s[j] - lse) - (j == 0 ? 1.0 : 0.0);
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            double y = j == 0 ? 1.0 : 0.0;
            value += detail::softplus(s[j]) - y * s[j];
            dl_ds[j] = (detail::sigmoid(s[j]) - y) / static_cast<double>(n);
        }
        value /= static_cast<double>(n);
    }
    if (!grad.empty()) {
        for (std::size_t j = 0; j < n; ++j) model.forward(g.content_logits[j], g.features[j], grad, weight * dl_ds[j]);
    }
    return value;
}

namespace detail {

template <class Range, class Get>
double mean_loss(const CombinerModel& model, const Range& batch, Get get, LossKind loss, std::span<double> grad) {
    if (batch.empty()) throw UsageError("empty batch");
    std::fill(grad.begin(), grad.end(), 0.0);
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& item : batch) total += group_loss(model, get(item), loss, grad, w);
    return total * w;
}

}  // namespace detail

/// Mean loss over `batch`; with non-empty `grad`, writes the mean gradient.
inline double batch_loss(const CombinerModel& model, std::span<const TrainingGroup> batch, LossKind loss,
                         std::span<double> grad = {}) {
    return detail::mean_loss(model, batch, [](const TrainingGroup& g) -> const TrainingGroup& { return g; }, loss, grad);
}

struct TrainResult {
    CombinerModel model;
    /// Mean training loss of each epoch, measured while updating.
    std::vector<double> loss_curve;
};

/// Mini-batch SGD with optional momentum. Deterministic for a fixed seed.
inline TrainResult train(CombinerModel model, const std::vector<TrainingGroup>& groups, const TrainConfig& config) {
    config.validate();
    if (groups.empty()) throw DataError("empty training set");
    Rng rng(config.seed);
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(model.parameter_count());
    std::vector<double> velocity(model.parameter_count(), 0.0);
    std::vector<std::size_t> batch;
    TrainResult result{model, {}};

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
            double l = detail::mean_loss(
                result.model, batch, [&](std::size_t i) -> const TrainingGroup& { return groups[i]; }, config.loss, grad);
            if (!std::isfinite(l)) throw NumericError("training loss is not finite at epoch " + std::to_string(epoch));
            epoch_loss += l * static_cast<double>(batch.size());
            seen += batch.size();
            auto params = result.model.params();
            for (std::size_t p = 0; p < params.size(); ++p) {
                if (!result.model.trainable(p)) continue;
                velocity[p] = config.momentum * velocity[p] - config.step_size * grad[p];
                params[p] += velocity[p];
            }
        }
        result.loss_curve.push_back(epoch_loss / static_cast<double>(seen));
    }
    for (double p : result.model.params()) {
        if (!std::isfinite(p)) throw NumericError("training diverged: non-finite parameter");
    }
    return result;
}

struct GradCheckOptions {
    double h = 1e-5;
    /// Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-3;
    LossKind loss = LossKind::SoftmaxOverCandidates;
};

/// Largest relative gap between analytic gradients and central finite
/// differences of the mean batch loss, over every parameter.
inline double grad_check(const CombinerModel& model, std::span<const TrainingGroup> batch,
                         const GradCheckOptions& opt = {}) {
    if (batch.empty()) throw UsageError("gradient check needs a non-empty batch");
    std::vector<double> analytic(model.parameter_count());
    batch_loss(model, batch, opt.loss, analytic);
    CombinerModel probe = model;
    double worst = 0.0;
    for (std::size_t p = 0; p < probe.parameter_count(); ++p) {
        double orig = probe.params()[p];
        probe.params()[p] = orig + opt.h;
        double up = batch_loss(probe, batch, opt.loss);
        probe.params()[p] = orig - opt.h;
        double down = batch_loss(probe, batch, opt.loss);
        probe.params()[p] = orig;
        double numeric = (up - down) / (2.0 * opt.h);
        double denom = std::max({std::abs(analytic[p]), std::abs(numeric), opt.floor});
        worst = std::max(worst, std::abs(analytic[p] - numeric) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

/// Text container: header, mode, shape, fill values, then one parameter
/// per line in layout order, 9 significant digits.
inline std::string serialize_combiner(const CombinerModel& model, const std::array<double, kNumFeatures>& fill = {}) {
    std::string out = "ctxrec-combiner 1\n";
    out += std::string("mode ") + (model.mode() == CombinerMode::LinearNaive ? "linear" : "mlp") + "\n";
    out += "hidden " + std::to_string(model.hidden()) + "\n";
    out += std::string("missing_indicators ") + (model.missing_indicators() ? "1" : "0") + "\n";
    out += "fill";
    for (double f : fill) out += " " + text::fmt9(f);
    out += "\nparams " + std::to_string(model.parameter_count()) + "\n";
    for (double p : model.params()) out += text::fmt9(p) + "\n";
    return out;
}

struct LoadedCombiner {
    CombinerModel model;
    std::array<double, kNumFeatures> fill{};
};

inline LoadedCombiner parse_combiner(std::string_view content) {
    std::vector<std::string_view> lines;
    text::for_each_line(content, [&](std::string_view l, std::size_t) {
        if (!text::trim(l).empty()) lines.push_back(text::trim(l));
    });
    auto field = [&](std::size_t i, std::string_view key) {
        if (i >= lines.size() || lines[i].rfind(key, 0) != 0) throw DataError("model file: expected '" + std::string(key) + "'");
        return text::trim(lines[i].substr(key.size()));
    };
    if (lines.empty() || lines[0] != "ctxrec-combiner 1") throw DataError("not a combiner model file");
    auto mode_s = field(1, "mode");
    CombinerMode mode;
    if (mode_s == "linear") {
        mode = CombinerMode::LinearNaive;
    } else if (mode_s == "mlp") {
        mode = CombinerMode::MlpModule;
    } else {
        throw DataError("model file: unknown mode");
    }
    auto hidden = text::parse_int(field(2, "hidden"));
    auto missing = text::parse_int(field(3, "missing_indicators"));
    if (!hidden || !missing || *hidden < 0) throw DataError("model file: bad shape");
    LoadedCombiner out{CombinerModel(mode, static_cast<std::size_t>(mode == CombinerMode::MlpModule ? *hidden : 32),
                                     *missing != 0),
                       {}};
    auto fills = text::split_ws(field(4, "fill"));
    if (fills.size() != kNumFeatures) throw DataError("model file: bad fill line");
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        auto v = text::parse_double(fills[i]);
        if (!v) throw DataError("model file: bad fill value");
        out.fill[i] = *v;
    }
    auto n = text::parse_int(field(5, "params"));
    if (!n || static_cast<std::size_t>(*n) != out.model.parameter_count() || lines.size() != 6 + static_cast<std::size_t>(*n)) {
        throw DataError("model file: parameter count mismatch");
    }
    for (std::size_t i = 0; i < out.model.parameter_count(); ++i) {
        auto v = text::parse_double(lines[6 + i]);
        if (!v) throw DataError("model file: bad parameter");
        out.model.params()[i] = *v;
    }
    return out;
}

}  // namespace ctxrec
