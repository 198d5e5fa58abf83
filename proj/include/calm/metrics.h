#pragma once

#include <string>
#include <vector>

#include "calm/common.h"

namespace calm {

struct ScoredDoc {
    std::string id;
    double score = 0.0;  // score for class 1
    int label = 0;
};

struct ScoredSet {
    std::vector<ScoredDoc> docs;

    int count(int label) const {
        int n = 0;
        for (const auto& d : docs) n += d.label == label;
        return n;
    }
};

// Mann-Whitney: probability a random positive outranks a random negative,
// ties counted one half. Exact via average ranks.
double auc_roc(const ScoredSet& s);

// Average precision: sum over positives, in descending score order with ties
// broken by ascending doc id, of precision at that rank, divided by #positives.
double auc_pr(const ScoredSet& s);

// F1 of the classifier "positive iff score >= threshold"; 0 when degenerate.
double f1(const ScoredSet& s, double threshold);

// Scans distinct scores descending, returns the first threshold maximizing F1.
double best_f1_threshold(const ScoredSet& s);

struct MetricsReport {
    double auc_pr = 0.0;
    double f1 = 0.0;
    double auc_roc = 0.0;
    double threshold = 0.0;
    int n_pos = 0;
    int n_neg = 0;
};

MetricsReport compute_metrics(const ScoredSet& s, double threshold);
std::string metrics_to_json(const MetricsReport& m);

}  // namespace calm
