#include "calm/metrics.h"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace calm {

static void require_finite(const ScoredSet& s) {
    for (const auto& d : s.docs) {
        if (!std::isfinite(d.score)) throw DataError("metrics: non-finite score");
        if (d.label != 0 && d.label != 1) throw DataError("metrics: labels must be 0 or 1");
    }
}

double auc_roc(const ScoredSet& s) {
    require_finite(s);
    int n_pos = s.count(1), n_neg = s.count(0);
    if (n_pos == 0 || n_neg == 0) throw DataError("auc_roc needs both classes present");

    std::vector<size_t> order(s.docs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return s.docs[a].score < s.docs[b].score; });

    // average ranks over tie groups, 1-based
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && s.docs[order[j]].score == s.docs[order[i]].score) ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k)
            if (s.docs[order[k]].label == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * n_neg);
}

// Descending score, ties by ascending doc id: the tie order contract used
// everywhere ranking matters.
static std::vector<size_t> ranking(const ScoredSet& s) {
    std::vector<size_t> order(s.docs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (s.docs[a].score != s.docs[b].score) return s.docs[a].score > s.docs[b].score;
        return s.docs[a].id < s.docs[b].id;
    });
    return order;
}

double auc_pr(const ScoredSet& s) {
    require_finite(s);
    int n_pos = s.count(1);
    if (n_pos == 0) throw DataError("auc_pr needs at least one positive");
    auto order = ranking(s);
    double ap = 0.0;
    int tp = 0;
    for (size_t k = 0; k < order.size(); ++k) {
        if (s.docs[order[k]].label == 1) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(k + 1);
        }
    }
    return ap / n_pos;
}

double f1(const ScoredSet& s, double threshold) {
    require_finite(s);
    if (!std::isfinite(threshold)) throw DataError("f1: threshold must be finite");
    long tp = 0, fp = 0, fn = 0;
    for (const auto& d : s.docs) {
        bool pred = d.score >= threshold;
        if (pred && d.label == 1) ++tp;
        else if (pred && d.label == 0) ++fp;
        else if (!pred && d.label == 1) ++fn;
    }
    long denom = 2 * tp + fp + fn;
    if (denom == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double best_f1_threshold(const ScoredSet& s) {
    require_finite(s);
    if (s.docs.empty()) throw DataError("best_f1_threshold: empty set");
    std::vector<double> scores;
    scores.reserve(s.docs.size());
    for (const auto& d : s.docs) scores.push_back(d.score);
    std::sort(scores.begin(), scores.end(), std::greater<>());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    double best_t = scores.front();
    double best_f1 = -1.0;
    for (double t : scores) {
        double v = f1(s, t);
        if (v > best_f1) {
            best_f1 = v;
            best_t = t;
        }
    }
    return best_t;
}

MetricsReport compute_metrics(const ScoredSet& s, double threshold) {
    MetricsReport m;
    m.n_pos = s.count(1);
    m.n_neg = s.count(0);
    m.auc_pr = auc_pr(s);
    m.auc_roc = auc_roc(s);
    m.threshold = threshold;
    m.f1 = f1(s, threshold);
    return m;
}

std::string metrics_to_json(const MetricsReport& m) {
    nlohmann::ordered_json j;
    j["auc_pr"] = m.auc_pr;
    j["f1"] = m.f1;
    j["auc_roc"] = m.auc_roc;
    j["threshold"] = m.threshold;
    j["n_pos"] = m.n_pos;
    j["n_neg"] = m.n_neg;
    return j.dump(2) + "\n";
}

}  // namespace calm
