#include "calm/interpret.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>

#include "calm/csv.h"
#include "calm/svg.h"

namespace calm {

namespace {

std::vector<LogitBreakdown<float>> collect_breakdowns(ModelParams<float>& model,
                                                      const std::vector<EncodedDocument>& docs) {
    std::vector<LogitBreakdown<float>> out(docs.size());
    std::exception_ptr err;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < static_cast<int>(docs.size()); ++i) {
        try {
            out[i] = predict(model, docs[i]).breakdown;
        } catch (...) {
#pragma omp critical
            err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
}

std::string lowercased(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

}  // namespace

InfluenceTable influence_scores(ModelParams<float>& model, const Corpus& corpus) {
    if (corpus.documents.empty()) throw DataError("influence_scores: empty corpus");
    if (model.variant == Variant::baseline)
        throw DataError("influence_scores: baseline models have no component breakdown");
    auto docs = encode_corpus(corpus, model.vocab, model.max_component_length);
    auto breakdowns = collect_breakdowns(model, docs);
    int m = model.num_components();
    InfluenceTable table;
    table.n_docs = static_cast<int>(docs.size());
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (const auto& b : breakdowns) acc += std::fabs(static_cast<double>(risk_score(b, i)));
        table.entries.push_back({i, model.schema[i], acc / table.n_docs});
    }
    std::stable_sort(table.entries.begin(), table.entries.end(),
                     [](const InfluenceEntry& a, const InfluenceEntry& b) {
                         return a.influence > b.influence;
                     });
    return table;
}

float score_component_value(ModelParams<float>& model, int component, const std::string& text) {
    Document doc;
    doc.id = "_value_probe";
    for (int i = 0; i < model.num_components(); ++i)
        doc.components.emplace_back(model.schema[i], i == component ? text : "");
    EncodedDocument enc = encode_document(doc, model.vocab, model.max_component_length);
    // l_i depends only on x_i, so a probe document isolates the value exactly.
    auto pred = predict(model, enc);
    return risk_score(pred.breakdown, component);
}

RiskCurve feature_value_curve(ModelParams<float>& model, const Corpus& corpus, int component,
                              int k) {
    if (component < 0 || component >= model.num_components())
        throw DataError("feature_value_curve: no such component");
    if (model.variant == Variant::baseline)
        throw DataError("feature_value_curve: baseline models have no component breakdown");

    // Exact string frequencies after lowercasing; surface variants stay
    // separate points on purpose.
    std::map<std::string, int> counts;
    for (const auto& doc : corpus.documents)
        ++counts[lowercased(doc.components[component].second)];
    if (counts.empty()) throw DataError("feature_value_curve: component has no values");

    std::vector<std::pair<std::string, int>> by_freq(counts.begin(), counts.end());
    std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(by_freq.size()) > k) by_freq.resize(k);

    RiskCurve curve;
    curve.component = component;
    curve.component_name = model.schema[component];
    for (const auto& [value, freq] : by_freq) {
        RiskCurvePoint p;
        p.value = value;
        p.frequency = freq;
        p.risk = score_component_value(model, component, value);
        curve.points.push_back(std::move(p));
    }
    std::stable_sort(curve.points.begin(), curve.points.end(),
                     [](const RiskCurvePoint& a, const RiskCurvePoint& b) { return a.risk < b.risk; });

    // nearest-rank percentile picks over the sorted risks; when picks collide
    // the extremes and the median take precedence
    int n = static_cast<int>(curve.points.size());
    for (int pct : {75, 25, 50, 100, 0}) {
        int idx = static_cast<int>(std::lround(pct / 100.0 * (n - 1)));
        curve.points[idx].percentile = pct;
    }
    return curve;
}

PatientAttribution patient_attribution(ModelParams<float>& model, const EncodedDocument& doc,
                                       int k) {
    if (model.variant == Variant::baseline)
        throw DataError("patient_attribution: baseline models have no component breakdown");
    auto pred = predict(model, doc);
    const auto& b = pred.breakdown;

    std::vector<AttributionEntry> entries;
    for (int i = 0; i < b.m; ++i)
        entries.push_back({model.schema[i], risk_score(b, i), false});
    for (const auto& pt : b.pair_terms)
        entries.push_back({model.schema[pt.i] + "|" + model.schema[pt.j],
                           pt.logits[1] - pt.logits[0], true});

    int n = static_cast<int>(entries.size());
    int k_eff = n < 2 * k ? n / 2 : k;

    // One descending sort; ties keep schema order. Top and bottom are taken
    // from opposite ends so they never overlap.
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int c) { return entries[a].risk > entries[c].risk; });

    PatientAttribution attr;
    attr.doc_id = doc.id;
    for (int i = 0; i < k_eff; ++i) attr.top.push_back(entries[idx[i]]);
    std::vector<int> tail(idx.end() - k_eff, idx.end());
    std::stable_sort(tail.begin(), tail.end(), [&](int a, int c) {
        if (entries[a].risk != entries[c].risk) return entries[a].risk < entries[c].risk;
        return a < c;
    });
    for (int i : tail) attr.bottom.push_back(entries[i]);
    return attr;
}

void export_influence_csv(const InfluenceTable& t, const std::string& path) {
    std::string out = "component_name,influence,n_docs\n";
    for (const auto& e : t.entries)
        out += csv_escape(e.name) + "," + fmt_double(e.influence) + "," +
               std::to_string(t.n_docs) + "\n";
    write_file(path, out);
}

void export_influence_svg(const InfluenceTable& t, const std::string& path, int max_rows) {
    std::vector<SvgBar> bars;
    for (const auto& e : t.entries) {
        if (static_cast<int>(bars.size()) >= max_rows) break;
        bars.push_back({e.name, e.influence});
    }
    write_file(path, svg_bar_chart("component influence (mean |risk score|)", bars));
}

void export_curve_csv(const RiskCurve& c, const std::string& path) {
    std::string out = "component_name,value,frequency,risk_score,percentile\n";
    for (const auto& p : c.points) {
        out += csv_escape(c.component_name) + "," + csv_escape(p.value) + "," +
               std::to_string(p.frequency) + "," + fmt_float(p.risk) + "," +
               (p.percentile >= 0 ? std::to_string(p.percentile) : "") + "\n";
    }
    write_file(path, out);
}

void export_curve_svg(const RiskCurve& c, const std::string& path) {
    std::vector<SvgPoint> pts;
    for (const auto& p : c.points)
        pts.push_back({p.value.empty() ? "(empty)" : p.value, static_cast<double>(p.risk),
                       p.percentile >= 0});
    write_file(path, svg_point_plot("risk by value: " + c.component_name, pts));
}

void export_attribution_csv(const PatientAttribution& a, const std::string& path) {
    std::string out = "doc_id,group,rank,name,kind,risk_score\n";
    for (size_t i = 0; i < a.top.size(); ++i)
        out += csv_escape(a.doc_id) + ",top," + std::to_string(i + 1) + "," +
               csv_escape(a.top[i].name) + "," + (a.top[i].is_pair ? "pair" : "component") +
               "," + fmt_float(a.top[i].risk) + "\n";
    for (size_t i = 0; i < a.bottom.size(); ++i)
        out += csv_escape(a.doc_id) + ",bottom," + std::to_string(i + 1) + "," +
               csv_escape(a.bottom[i].name) + "," + (a.bottom[i].is_pair ? "pair" : "component") +
               "," + fmt_float(a.bottom[i].risk) + "\n";
    write_file(path, out);
}

void export_attribution_svg(const PatientAttribution& a, const std::string& path) {
    std::vector<SvgBar> bars;
    for (const auto& e : a.top) bars.push_back({e.name, static_cast<double>(e.risk)});
    for (const auto& e : a.bottom) bars.push_back({e.name, static_cast<double>(e.risk)});
    write_file(path, svg_bar_chart("risk attribution: " + a.doc_id, bars));
}

void export_breakdown_csv(ModelParams<float>& model, const Corpus& corpus,
                          const std::string& path) {
    if (model.variant == Variant::baseline)
        throw DataError("breakdown export: baseline models have no component breakdown");
    auto docs = encode_corpus(corpus, model.vocab, model.max_component_length);
    auto breakdowns = collect_breakdowns(model, docs);
    std::string out = "doc_id,component_name,logit_class0,logit_class1,risk_score\n";
    const auto& bias = model.heads.bias.v.a;
    out += ",bias," + fmt_float(bias[0]) + "," + fmt_float(bias[1]) + "," +
           fmt_float(bias[1] - bias[0]) + "\n";
    for (size_t d = 0; d < docs.size(); ++d) {
        const auto& b = breakdowns[d];
        for (int i = 0; i < b.m; ++i)
            out += csv_escape(docs[d].id) + "," + csv_escape(model.schema[i]) + "," +
                   fmt_float(b.comp_logits[i][0]) + "," + fmt_float(b.comp_logits[i][1]) + "," +
                   fmt_float(risk_score(b, i)) + "\n";
    }
    write_file(path, out);
}

void export_pair_breakdown_csv(ModelParams<float>& model, const Corpus& corpus,
                               const std::string& path) {
    if (model.variant != Variant::calm2)
        throw DataError("pair breakdown export requires a calm2 model");
    auto docs = encode_corpus(corpus, model.vocab, model.max_component_length);
    auto breakdowns = collect_breakdowns(model, docs);
    std::string out = "doc_id,comp_i,comp_j,logit_class0,logit_class1,risk_score\n";
    for (size_t d = 0; d < docs.size(); ++d) {
        for (const auto& pt : breakdowns[d].pair_terms)
            out += csv_escape(docs[d].id) + "," + csv_escape(model.schema[pt.i]) + "," +
                   csv_escape(model.schema[pt.j]) + "," + fmt_float(pt.logits[0]) + "," +
                   fmt_float(pt.logits[1]) + "," + fmt_float(pt.logits[1] - pt.logits[0]) + "\n";
    }
    write_file(path, out);
}

void export_pair_heatmap_csv(ModelParams<float>& model, const Corpus& corpus, int comp_i,
                             int comp_j, const std::string& path, int k) {
    if (model.variant != Variant::calm2)
        throw DataError("pair heatmap requires a calm2 model");
    if (comp_i >= comp_j) throw DataError("pair heatmap requires comp_i < comp_j");

    auto top_values = [&](int comp) {
        std::map<std::string, int> counts;
        for (const auto& doc : corpus.documents)
            ++counts[lowercased(doc.components[comp].second)];
        std::vector<std::pair<std::string, int>> by_freq(counts.begin(), counts.end());
        std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (static_cast<int>(by_freq.size()) > k) by_freq.resize(k);
        return by_freq;
    };
    auto vals_i = top_values(comp_i);
    auto vals_j = top_values(comp_j);

    std::string out = "comp_i,comp_j,value_i,value_j,risk_score\n";
    for (const auto& [vi, ci] : vals_i) {
        for (const auto& [vj, cj] : vals_j) {
            Document doc;
            doc.id = "_pair_probe";
            for (int c = 0; c < model.num_components(); ++c) {
                std::string text = c == comp_i ? vi : (c == comp_j ? vj : "");
                doc.components.emplace_back(model.schema[c], text);
            }
            auto enc = encode_document(doc, model.vocab, model.max_component_length);
            auto pred = predict(model, enc);
            float risk = 0.0f;
            for (const auto& pt : pred.breakdown.pair_terms)
                if (pt.i == comp_i && pt.j == comp_j) risk = pt.logits[1] - pt.logits[0];
            out += csv_escape(model.schema[comp_i]) + "," + csv_escape(model.schema[comp_j]) +
                   "," + csv_escape(vi) + "," + csv_escape(vj) + "," + fmt_float(risk) + "\n";
        }
    }
    write_file(path, out);
}

}  // namespace calm
