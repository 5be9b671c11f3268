#pragma once

// Brute-force reference implementations, written from the definitions and
// sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

/// Sum of exp(-alpha (t - t_k)) over click times strictly before t.
inline double trendiness(const std::vector<long long>& click_times, long long t, double alpha) {
    double s = 0.0;
    for (auto tk : click_times) {
        if (tk < t) s += std::exp(-alpha * static_cast<double>(t - tk));
    }
    return s;
}

/// Pairwise AUC, ties count half.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double good = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[i] == 1 && labels[j] == 0) {
                pairs += 1.0;
                if (scores[i] > scores[j]) good += 1.0;
                if (scores[i] == scores[j]) good += 0.5;
            }
        }
    }
    return good / pairs;
}

/// Candidate order: score descending, then item id ascending.
inline std::vector<int> ranked_labels(const std::vector<std::string>& items, const std::vector<double>& scores,
                                      const std::vector<int>& labels) {
    std::vector<std::size_t> idx(items.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Insertion sort keeps this independent of std::sort comparators elsewhere.
    for (std::size_t i = 1; i < idx.size(); ++i) {
        for (std::size_t j = i; j > 0; --j) {
            auto a = idx[j - 1], b = idx[j];
            bool swap = scores[b] > scores[a] || (scores[b] == scores[a] && items[b] < items[a]);
            if (!swap) break;
            std::swap(idx[j - 1], idx[j]);
        }
    }
    std::vector<int> out;
    for (auto i : idx) out.push_back(labels[i]);
    return out;
}

inline double ndcg(const std::vector<int>& ranked, std::size_t k) {
    double dcg = 0.0;
    for (std::size_t r = 0; r < ranked.size() && r < k; ++r) {
        if (ranked[r]) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    auto positives = static_cast<std::size_t>(std::count(ranked.begin(), ranked.end(), 1));
    double ideal = 0.0;
    for (std::size_t r = 0; r < positives && r < k; ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / ideal;
}

inline double recall(const std::vector<int>& ranked, std::size_t k) {
    double hits = 0.0;
    for (std::size_t r = 0; r < ranked.size() && r < k; ++r) hits += ranked[r];
    return hits / static_cast<double>(std::count(ranked.begin(), ranked.end(), 1));
}

/// Best split gain on one column by trying every midpoint, computing
/// left/right sums from scratch each time.
struct Split {
    double threshold = 0.0;
    double gain = -1.0;
};

inline Split best_split(const std::vector<double>& x, const std::vector<double>& g, const std::vector<double>& h,
                        double lambda) {
    std::vector<double> values = x;
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    Split best;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        double thr = 0.5 * (values[i] + values[i + 1]);
        double gl = 0, hl = 0, gr = 0, hr = 0;
        for (std::size_t r = 0; r < x.size(); ++r) {
            if (x[r] < thr) {
                gl += g[r];
                hl += h[r];
            } else {
                gr += g[r];
                hr += h[r];
            }
        }
        double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - (gl + gr) * (gl + gr) / (hl + hr + lambda);
        if (gain > best.gain) best = {thr, gain};
    }
    return best;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace oracle
