#pragma once

#include <optional>
#include <string>
#include <vector>

#include "calm/backbone.h"
#include "calm/common.h"
#include "calm/data.h"
#include "calm/interactions.h"
#include "calm/tape.h"

namespace calm {

// Architecture family. Distillation is a training objective, not a variant:
// a distilled student is a plain calm model at inference time.
enum class Variant { baseline, calm, calm2 };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::calm: return "calm";
        case Variant::calm2: return "calm2";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "baseline") return Variant::baseline;
    if (s == "calm") return Variant::calm;
    if (s == "calm2") return Variant::calm2;
    throw UsageError("unknown variant: " + s);
}

template <typename T>
struct HeadParams {
    struct Head {
        PTensor<T> w;  // C x d_model
        PTensor<T> b;  // 1 x C
    };
    std::vector<Head> heads;
    PTensor<T> bias;  // 1 x C, the global additive bias

    // Zero init: initial predictions are uniform and all contributions are 0.
    void init(int num_heads, int d_model, int n_classes) {
        heads.resize(num_heads);
        for (auto& h : heads) {
            h.w.init(n_classes, d_model);
            h.b.init(1, n_classes);
        }
        bias.init(1, n_classes);
    }

    template <typename F>
    void visit(F&& f) {
        for (size_t i = 0; i < heads.size(); ++i) {
            f("head" + std::to_string(i) + ".w", heads[i].w);
            f("head" + std::to_string(i) + ".b", heads[i].b);
        }
        f("bias", bias);
    }
};

template <typename T>
struct PairTerm {
    int i = 0, j = 0;
    std::vector<T> logits;
};

// Everything the additive prediction is made of; z is reconstructible from the
// stored parts via the aggregation formula.
template <typename T>
struct LogitBreakdown {
    int m = 0;
    T beta = T(0);  // 0 for plain calm
    std::vector<std::vector<T>> comp_logits;
    std::vector<PairTerm<T>> pair_terms;
    std::vector<T> bias;
    std::vector<T> z;
    std::vector<T> p;
};

template <typename T>
struct Prediction {
    int predicted_class = 0;
    T score = T(0);  // probability of class 1
    LogitBreakdown<T> breakdown;
};

template <typename T>
struct ModelParams {
    Variant variant = Variant::calm;
    BackboneConfig cfg;
    int n_classes = 2;
    int max_component_length = 16;
    std::vector<std::string> schema;
    Vocabulary vocab;
    BackboneParams<T> backbone;
    HeadParams<T> heads;
    std::optional<InteractionParams<T>> inter;
    std::optional<double> f1_threshold;

    int num_components() const { return static_cast<int>(schema.size()); }

    void init(Variant var, std::vector<std::string> schema_, Vocabulary vocab_,
              BackboneConfig cfg_, uint64_t seed, int rank = 8, T beta = static_cast<T>(0.5)) {
        variant = var;
        schema = std::move(schema_);
        vocab = std::move(vocab_);
        cfg = cfg_;
        cfg.vocab_size = vocab.size();
        Rng rng = Rng::substream(seed, 1);
        backbone.init(cfg, rng);
        int m = num_components();
        heads.init(variant == Variant::baseline ? 1 : m, cfg.d_model, n_classes);
        if (variant == Variant::calm2) {
            if (m < 2) throw DataError("calm2 needs at least two components");
            inter.emplace();
            Rng irng = Rng::substream(seed, 2);
            inter->init(m, rank, beta, cfg.d_model, n_classes, irng);
        } else {
            inter.reset();
        }
    }

    template <typename F>
    void visit(F&& f) {
        backbone.visit(f);
        heads.visit(f);
        if (inter) inter->visit(f);
    }

    void zero_grad() {
        visit([](const std::string&, PTensor<T>& t) { t.g.zero(); });
    }
};

// ---- plain helpers ----

template <typename T>
std::vector<T> softmax_vec(const std::vector<T>& z) {
    std::vector<T> p(z.size());
    Tape<T>::softmax_row(z.data(), p.data(), static_cast<int>(z.size()));
    return p;
}

// z = (1/M) sum l_i + b
template <typename T>
std::vector<T> aggregate_logits(const std::vector<std::vector<T>>& comp_logits,
                                const std::vector<T>& bias) {
    if (comp_logits.empty()) throw DataError("aggregate: empty logit list");
    std::vector<T> z(bias.size(), T(0));
    for (const auto& l : comp_logits)
        for (size_t c = 0; c < z.size(); ++c) z[c] += l[c];
    T inv_m = T(1) / static_cast<T>(comp_logits.size());
    for (size_t c = 0; c < z.size(); ++c) z[c] = z[c] * inv_m + bias[c];
    return z;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> aggregate(const std::vector<std::vector<T>>& comp_logits,
                                                    const std::vector<T>& bias) {
    auto z = aggregate_logits(comp_logits, bias);
    return {z, softmax_vec(z)};
}

template <typename T>
T cross_entropy(const std::vector<T>& p, int label) {
    if (label < 0 || label >= static_cast<int>(p.size()))
        throw DataError("cross_entropy: label out of range");
    double py = std::max(static_cast<double>(p[label]), 1e-12);
    return static_cast<T>(-std::log(py));
}

template <typename T>
int argmax_lowest(const std::vector<T>& z) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(z.size()); ++i)
        if (z[i] > z[best]) best = i;
    return best;
}

// ---- stream builders ----

// One segment per component, per-segment positions, block-diagonal mask.
inline MaskedInput build_packed(const EncodedDocument& doc, bool causal = true) {
    return pack_segments(doc.components, causal);
}

inline MaskedInput build_single_segment(const std::vector<int>& tokens, bool causal = true) {
    return pack_segments({tokens}, causal);
}

// Concatenation stream for the baseline: one segment spanning the whole
// document, with a single framing pair instead of per-component markers.
inline MaskedInput build_baseline_stream(const EncodedDocument& doc, bool causal = true) {
    std::vector<int> toks;
    toks.push_back(kStartId);
    for (const auto& comp : doc.components)
        toks.insert(toks.end(), comp.begin() + 1, comp.end() - 1);
    toks.push_back(kEosId);
    return pack_segments({toks}, causal);
}

// ---- forward paths ----

enum class EncodePath { packed, independent };

template <typename T>
struct ForwardRefs {
    std::vector<VRef> h;       // pooled segment representations
    std::vector<VRef> logits;  // per-component head outputs, 1 x C
    std::vector<std::tuple<int, int, VRef>> pair_refs;
    VRef z;
};

template <typename T>
VRef head_logits_refs(Tape<T>& tape, typename HeadParams<T>::Head& head, VRef h,
                      bool with_grad) {
    return tape.add_rowvec(tape.matmul_nt(h, tape.param(head.w.v, with_grad ? &head.w.g : nullptr)),
                           tape.param(head.b.v, with_grad ? &head.b.g : nullptr));
}

// Encodes all components and applies heads and aggregation on one tape.
// The packed path encodes one stream; the independent path runs one encode
// per component. Both produce the same values.
template <typename T>
ForwardRefs<T> calm_forward_refs(Tape<T>& tape, ModelParams<T>& model,
                                 const EncodedDocument& doc, EncodePath path,
                                 const EncodeOptions<T>& opts = {}, bool with_grad = true) {
    int m = doc.num_components();
    if (m != model.num_components())
        throw DataError("document component count does not match model schema");
    ForwardRefs<T> out;
    if (path == EncodePath::packed) {
        if (doc.total_length() > model.cfg.max_position)
            throw StreamOverflowError(
                "packed stream length " + std::to_string(doc.total_length()) +
                " exceeds capacity " + std::to_string(model.cfg.max_position) +
                "; fall back to component_forward");
        MaskedInput mi = build_packed(doc, model.cfg.causal_within_segment);
        VRef hidden = encode_on_tape(tape, model.cfg, model.backbone, mi, opts, with_grad);
        out.h = pool_eos_refs(tape, hidden, mi);
    } else {
        for (int i = 0; i < m; ++i) {
            MaskedInput mi =
                build_single_segment(doc.components[i], model.cfg.causal_within_segment);
            VRef hidden = encode_on_tape(tape, model.cfg, model.backbone, mi, opts, with_grad);
            out.h.push_back(pool_eos_refs(tape, hidden, mi)[0]);
        }
    }
    for (int i = 0; i < m; ++i)
        out.logits.push_back(head_logits_refs(tape, model.heads.heads[i], out.h[i], with_grad));

    VRef bias = tape.param(model.heads.bias.v, with_grad ? &model.heads.bias.g : nullptr);
    VRef acc = out.logits[0];
    for (int i = 1; i < m; ++i) acc = tape.add(acc, out.logits[i]);

    if (model.variant == Variant::calm2) {
        auto& inter = *model.inter;
        VRef pacc;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                VRef pl = pair_logit_refs(tape, inter, i, j, out.h[i], out.h[j], with_grad);
                out.pair_refs.emplace_back(i, j, pl);
                pacc = pacc.valid() ? tape.add(pacc, pl) : pl;
            }
        T wa = (T(1) - inter.beta) / static_cast<T>(m);
        T wp = inter.beta / static_cast<T>(m * (m - 1) / 2);
        out.z = tape.add(tape.add_scaled(acc, pacc, wa, wp), bias);
    } else {
        out.z = tape.add(tape.scale(acc, T(1) / static_cast<T>(m)), bias);
    }
    return out;
}

template <typename T>
LogitBreakdown<T> extract_breakdown(const Tape<T>& tape, const ForwardRefs<T>& refs,
                                    const ModelParams<T>& model) {
    LogitBreakdown<T> b;
    b.m = static_cast<int>(refs.logits.size());
    b.beta = model.inter ? model.inter->beta : T(0);
    for (VRef l : refs.logits) b.comp_logits.push_back(tape.val(l));
    for (const auto& [i, j, r] : refs.pair_refs) b.pair_terms.push_back({i, j, tape.val(r)});
    b.bias = model.heads.bias.v.a;
    b.z = tape.val(refs.z);
    b.p = softmax_vec(b.z);
    return b;
}

template <typename T>
Prediction<T> prediction_from(const LogitBreakdown<T>& b) {
    Prediction<T> pred;
    pred.breakdown = b;
    pred.predicted_class = argmax_lowest(b.z);
    pred.score = b.p.size() > 1 ? b.p[1] : b.p[0];
    return pred;
}

// Single concatenated sequence, one head, no additive structure.
template <typename T>
Prediction<T> baseline_forward(ModelParams<T>& model, const EncodedDocument& doc,
                               const EncodeOptions<T>& opts = {}) {
    MaskedInput mi = build_baseline_stream(doc, model.cfg.causal_within_segment);
    if (mi.length() > model.cfg.max_position)
        throw DataError("baseline stream length " + std::to_string(mi.length()) +
                        " exceeds max_position " + std::to_string(model.cfg.max_position));
    Tape<T> tape;
    VRef hidden = encode_on_tape(tape, model.cfg, model.backbone, mi, opts, false);
    VRef h = pool_eos_refs(tape, hidden, mi)[0];
    VRef z = head_logits_refs(tape, model.heads.heads[0], h, false);
    LogitBreakdown<T> b;
    b.m = 1;
    b.z = tape.val(z);
    b.p = softmax_vec(b.z);
    b.bias.assign(b.z.size(), T(0));
    return prediction_from(b);
}

template <typename T>
LogitBreakdown<T> component_forward(ModelParams<T>& model, const EncodedDocument& doc,
                                    const EncodeOptions<T>& opts = {}) {
    Tape<T> tape;
    auto refs = calm_forward_refs(tape, model, doc, EncodePath::independent, opts, false);
    return extract_breakdown(tape, refs, model);
}

template <typename T>
LogitBreakdown<T> packed_forward(ModelParams<T>& model, const EncodedDocument& doc,
                                 const EncodeOptions<T>& opts = {}) {
    Tape<T> tape;
    auto refs = calm_forward_refs(tape, model, doc, EncodePath::packed, opts, false);
    return extract_breakdown(tape, refs, model);
}

template <typename T>
LogitBreakdown<T> calm2_forward(ModelParams<T>& model, const EncodedDocument& doc,
                                EncodePath path = EncodePath::packed,
                                const EncodeOptions<T>& opts = {}) {
    if (model.variant != Variant::calm2) throw DataError("calm2_forward requires a calm2 model");
    Tape<T> tape;
    auto refs = calm_forward_refs(tape, model, doc, path, opts, false);
    return extract_breakdown(tape, refs, model);
}

// Variant dispatch with the packed-overflow fallback.
template <typename T>
Prediction<T> predict(ModelParams<T>& model, const EncodedDocument& doc,
                      const EncodeOptions<T>& opts = {}) {
    if (model.variant == Variant::baseline) return baseline_forward(model, doc, opts);
    try {
        Tape<T> tape;
        auto refs = calm_forward_refs(tape, model, doc, EncodePath::packed, opts, false);
        return prediction_from(extract_breakdown(tape, refs, model));
    } catch (const StreamOverflowError&) {
        Tape<T> tape;
        auto refs = calm_forward_refs(tape, model, doc, EncodePath::independent, opts, false);
        return prediction_from(extract_breakdown(tape, refs, model));
    }
}

// Training loss on a fresh tape. With kd_alpha > 0 a teacher logit vector is
// blended in via the temperature-scaled KL term.
template <typename T>
struct DocLoss {
    Tape<T> tape;
    VRef loss;
};

template <typename T>
VRef doc_loss_refs(Tape<T>& tape, ModelParams<T>& model, const EncodedDocument& doc,
                   const EncodeOptions<T>& opts, const std::vector<T>* teacher_z = nullptr,
                   T kd_alpha = T(0), T kd_temp = T(1)) {
    if (model.variant == Variant::baseline) {
        MaskedInput mi = build_baseline_stream(doc, model.cfg.causal_within_segment);
        if (mi.length() > model.cfg.max_position)
            throw DataError("baseline stream exceeds max_position");
        VRef hidden = encode_on_tape(tape, model.cfg, model.backbone, mi, opts, true);
        VRef h = pool_eos_refs(tape, hidden, mi)[0];
        VRef z = head_logits_refs(tape, model.heads.heads[0], h, true);
        return tape.cross_entropy_logits(z, doc.label);
    }
    ForwardRefs<T> refs;
    try {
        refs = calm_forward_refs(tape, model, doc, EncodePath::packed, opts, true);
    } catch (const StreamOverflowError&) {
        refs = calm_forward_refs(tape, model, doc, EncodePath::independent, opts, true);
    }
    VRef ce = tape.cross_entropy_logits(refs.z, doc.label);
    if (teacher_z && kd_alpha > T(0)) {
        VRef kd = tape.kd_logits(refs.z, *teacher_z, kd_temp);
        return tape.add_scaled(ce, kd, T(1) - kd_alpha, kd_alpha);
    }
    return ce;
}

}  // namespace calm
