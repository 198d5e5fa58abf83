#pragma once

#include <string>
#include <vector>

#include "calm/data.h"
#include "calm/model.h"

namespace calm {

// Per-(document, component) signed contribution in logit units; positive
// supports label 1.
template <typename T>
T risk_score(const LogitBreakdown<T>& b, int component) {
    if (b.comp_logits.at(component).size() != 2)
        throw DataError("risk_score is defined for binary tasks only");
    return b.comp_logits[component][1] - b.comp_logits[component][0];
}

struct InfluenceEntry {
    int component = 0;
    std::string name;
    double influence = 0.0;
};

struct InfluenceTable {
    std::vector<InfluenceEntry> entries;  // sorted by influence descending
    int n_docs = 0;
};

struct RiskCurvePoint {
    std::string value;
    int frequency = 0;
    float risk = 0.0f;
    int percentile = -1;  // 0/25/50/75/100 for the highlighted points, else -1
};

struct RiskCurve {
    int component = 0;
    std::string component_name;
    std::vector<RiskCurvePoint> points;  // sorted by risk ascending
};

struct AttributionEntry {
    std::string name;  // component name or "a|b" for a pair term
    float risk = 0.0f;
    bool is_pair = false;
};

struct PatientAttribution {
    std::string doc_id;
    std::vector<AttributionEntry> top;     // descending risk
    std::vector<AttributionEntry> bottom;  // ascending risk
};

// Population influence: mean |risk score| per component over the corpus.
InfluenceTable influence_scores(ModelParams<float>& model, const Corpus& corpus);

// Scores the k most frequent exact (lowercased) text values of one component.
// Since l_i depends only on x_i, each value is scored once in isolation.
RiskCurve feature_value_curve(ModelParams<float>& model, const Corpus& corpus, int component,
                              int k = 20);

// Risk score of a single component value in isolation.
float score_component_value(ModelParams<float>& model, int component, const std::string& text);

// Top-k / bottom-k contributing components (and pair terms for calm2 models).
// k is clipped to floor(M/2) when the document has fewer than 2k entries.
PatientAttribution patient_attribution(ModelParams<float>& model, const EncodedDocument& doc,
                                       int k = 5);

// ---- exports; all byte-deterministic given their inputs ----

void export_influence_csv(const InfluenceTable& t, const std::string& path);
void export_influence_svg(const InfluenceTable& t, const std::string& path, int max_rows = 10);
void export_curve_csv(const RiskCurve& c, const std::string& path);
void export_curve_svg(const RiskCurve& c, const std::string& path);
void export_attribution_csv(const PatientAttribution& a, const std::string& path);
void export_attribution_svg(const PatientAttribution& a, const std::string& path);

// Per-document additive contributions: doc_id,component_name,logit_class0,
// logit_class1,risk_score, plus one bias row.
void export_breakdown_csv(ModelParams<float>& model, const Corpus& corpus,
                          const std::string& path);

// Pairwise terms for calm2 models: doc_id,comp_i,comp_j,logit_class0,
// logit_class1,risk_score.
void export_pair_breakdown_csv(ModelParams<float>& model, const Corpus& corpus,
                               const std::string& path);

// Risk-score grid for one component pair over observed value combinations.
void export_pair_heatmap_csv(ModelParams<float>& model, const Corpus& corpus, int comp_i,
                             int comp_j, const std::string& path, int k = 20);

}  // namespace calm
