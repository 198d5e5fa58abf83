#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calm/common.h"
#include "calm/data.h"
#include "calm/mat.h"
#include "calm/rng.h"
#include "calm/tape.h"

namespace calm {

struct BackboneConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 128;
    int max_position = 64;
    bool causal_within_segment = true;

    int head_dim() const { return d_model / n_heads; }
    void validate() const {
        if (d_model % n_heads != 0) throw DataError("d_model must be divisible by n_heads");
        if (vocab_size <= 0) throw DataError("vocab_size must be positive");
    }
};

// Parameter tensor with a co-allocated gradient buffer.
template <typename T>
struct PTensor {
    Mat<T> v;
    Mat<T> g;
    void init(int r, int c) {
        v = Mat<T>(r, c);
        g = Mat<T>(r, c);
    }
};

template <typename T>
struct BackboneParams {
    struct Layer {
        PTensor<T> ln1_g, ln1_b;
        PTensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
        PTensor<T> ln2_g, ln2_b;
        PTensor<T> w1, b1, w2, b2;
    };
    PTensor<T> tok_emb, pos_emb;
    std::vector<Layer> layers;
    PTensor<T> lnf_g, lnf_b;

    void init(const BackboneConfig& cfg, Rng& rng, T std_dev = static_cast<T>(0.02)) {
        cfg.validate();
        auto gauss_fill = [&](PTensor<T>& t, int r, int c) {
            t.init(r, c);
            for (auto& x : t.v.a) x = static_cast<T>(rng.gauss()) * std_dev;
        };
        auto const_fill = [&](PTensor<T>& t, int r, int c, T value) {
            t.init(r, c);
            std::fill(t.v.a.begin(), t.v.a.end(), value);
        };
        int d = cfg.d_model;
        gauss_fill(tok_emb, cfg.vocab_size, d);
        gauss_fill(pos_emb, cfg.max_position, d);
        layers.resize(cfg.n_layers);
        for (auto& l : layers) {
            const_fill(l.ln1_g, 1, d, T(1));
            const_fill(l.ln1_b, 1, d, T(0));
            gauss_fill(l.wq, d, d);
            const_fill(l.bq, 1, d, T(0));
            gauss_fill(l.wk, d, d);
            const_fill(l.bk, 1, d, T(0));
            gauss_fill(l.wv, d, d);
            const_fill(l.bv, 1, d, T(0));
            gauss_fill(l.wo, d, d);
            const_fill(l.bo, 1, d, T(0));
            const_fill(l.ln2_g, 1, d, T(1));
            const_fill(l.ln2_b, 1, d, T(0));
            gauss_fill(l.w1, cfg.d_ff, d);
            const_fill(l.b1, 1, cfg.d_ff, T(0));
            gauss_fill(l.w2, d, cfg.d_ff);
            const_fill(l.b2, 1, d, T(0));
        }
        const_fill(lnf_g, 1, d, T(1));
        const_fill(lnf_b, 1, d, T(0));
    }

    template <typename F>
    void visit(F&& f) {
        f("backbone.tok_emb", tok_emb);
        f("backbone.pos_emb", pos_emb);
        for (size_t i = 0; i < layers.size(); ++i) {
            auto& l = layers[i];
            std::string p = "backbone.layer" + std::to_string(i) + ".";
            f(p + "ln1_g", l.ln1_g);
            f(p + "ln1_b", l.ln1_b);
            f(p + "wq", l.wq);
            f(p + "bq", l.bq);
            f(p + "wk", l.wk);
            f(p + "bk", l.bk);
            f(p + "wv", l.wv);
            f(p + "bv", l.bv);
            f(p + "wo", l.wo);
            f(p + "bo", l.bo);
            f(p + "ln2_g", l.ln2_g);
            f(p + "ln2_b", l.ln2_b);
            f(p + "w1", l.w1);
            f(p + "b1", l.b1);
            f(p + "w2", l.w2);
            f(p + "b2", l.b2);
        }
        f("backbone.lnf_g", lnf_g);
        f("backbone.lnf_b", lnf_b);
    }
};

// Segment boundaries within a packed stream: [begin, end).
struct Segment {
    int begin = 0;
    int end = 0;
    int length() const { return end - begin; }
};

// One token stream plus everything attention needs: per-token positions,
// segment index sets, and the pair predicate. Segments partition the stream.
struct MaskedInput {
    std::vector<int> tokens;
    std::vector<int> positions;
    std::vector<Segment> segments;
    std::vector<int> seg_of;
    bool causal = true;

    int length() const { return static_cast<int>(tokens.size()); }
    int num_segments() const { return static_cast<int>(segments.size()); }

    bool allow(int u, int v) const {
        if (seg_of[u] != seg_of[v]) return false;
        return !causal || v <= u;
    }

    RowMask row_mask() const {
        int n = length();
        RowMask m;
        m.n = n;
        m.allow.assign(static_cast<size_t>(n) * n, 0);
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v)
                if (allow(u, v)) m.allow[static_cast<size_t>(u) * n + v] = 1;
        return m;
    }
};

// Concatenates token segments into one stream with per-segment position reset.
inline MaskedInput pack_segments(const std::vector<std::vector<int>>& segs, bool causal) {
    MaskedInput mi;
    mi.causal = causal;
    for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
        Segment seg;
        seg.begin = mi.length();
        int pos = 0;
        for (int tok : segs[s]) {
            mi.tokens.push_back(tok);
            mi.positions.push_back(pos++);
            mi.seg_of.push_back(s);
        }
        seg.end = mi.length();
        mi.segments.push_back(seg);
    }
    return mi;
}

// Attention-FLOP accounting for the four execution strategies.
enum class CostMode { independent, padded, packed_dense, packed_blocksparse };

inline uint64_t attention_cost(const std::vector<int>& lengths, CostMode mode) {
    if (lengths.empty()) throw DataError("attention_cost: empty length list");
    uint64_t sum = 0, sum_sq = 0, lmax = 0;
    for (int l : lengths) {
        if (l <= 0) throw DataError("attention_cost: lengths must be positive");
        sum += static_cast<uint64_t>(l);
        sum_sq += static_cast<uint64_t>(l) * l;
        lmax = std::max(lmax, static_cast<uint64_t>(l));
    }
    switch (mode) {
        case CostMode::independent:
        case CostMode::packed_blocksparse:
            return sum_sq;
        case CostMode::padded:
            return static_cast<uint64_t>(lengths.size()) * lmax * lmax;
        case CostMode::packed_dense:
            return sum * sum;
    }
    throw DataError("attention_cost: bad mode");
}

template <typename T>
struct AttnTrace {
    // probs[layer * n_heads + head] is the post-softmax L x L attention matrix.
    std::vector<Mat<T>> probs;
};

template <typename T>
struct EncodeOptions {
    bool training = false;
    T dropout = T(0);
    Rng* rng = nullptr;
    AttnTrace<T>* trace = nullptr;
};

// Transformer forward on an existing tape. Pre-LN blocks, learned positional
// embeddings indexed by the per-segment positions, masked attention with exact
// zeros across segments. Returns the final hidden states (L x d_model).
template <typename T>
VRef encode_on_tape(Tape<T>& tape, const BackboneConfig& cfg, BackboneParams<T>& params,
                    const MaskedInput& input, const EncodeOptions<T>& opts = {},
                    bool with_grad = true) {
    int L = input.length();
    if (L == 0) throw DataError("encode: empty input");
    for (int tok : input.tokens)
        if (tok < 0 || tok >= cfg.vocab_size) throw DataError("encode: token id out of vocab range");
    for (int p : input.positions)
        if (p < 0 || p >= cfg.max_position)
            throw DataError("encode: position " + std::to_string(p) + " exceeds max_position " +
                            std::to_string(cfg.max_position));

    auto grad_of = [&](PTensor<T>& t) { return with_grad ? &t.g : nullptr; };
    bool drop = opts.training && opts.dropout > T(0);
    if (drop && opts.rng == nullptr) throw DataError("encode: dropout requires an rng");

    VRef x = tape.add(tape.gather_rows(params.tok_emb.v, grad_of(params.tok_emb), input.tokens),
                      tape.gather_rows(params.pos_emb.v, grad_of(params.pos_emb), input.positions));
    RowMask mask = input.row_mask();
    int dh = cfg.head_dim();
    T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    for (int li = 0; li < cfg.n_layers; ++li) {
        auto& l = params.layers[li];
        VRef ln1g = tape.param(l.ln1_g.v, grad_of(l.ln1_g));
        VRef ln1b = tape.param(l.ln1_b.v, grad_of(l.ln1_b));
        VRef a = tape.layer_norm(x, ln1g, ln1b, static_cast<T>(1e-5));

        VRef q = tape.add_rowvec(tape.matmul_nt(a, tape.param(l.wq.v, grad_of(l.wq))),
                                 tape.param(l.bq.v, grad_of(l.bq)));
        VRef k = tape.add_rowvec(tape.matmul_nt(a, tape.param(l.wk.v, grad_of(l.wk))),
                                 tape.param(l.bk.v, grad_of(l.bk)));
        VRef v = tape.add_rowvec(tape.matmul_nt(a, tape.param(l.wv.v, grad_of(l.wv))),
                                 tape.param(l.bv.v, grad_of(l.bv)));

        std::vector<VRef> head_outs;
        head_outs.reserve(cfg.n_heads);
        for (int h = 0; h < cfg.n_heads; ++h) {
            VRef qh = tape.cols_slice(q, h * dh, dh);
            VRef kh = tape.cols_slice(k, h * dh, dh);
            VRef vh = tape.cols_slice(v, h * dh, dh);
            VRef scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh);
            VRef probs = tape.softmax_masked(scores, mask);
            if (opts.trace) opts.trace->probs.push_back(tape.to_mat(probs));
            head_outs.push_back(tape.matmul(probs, vh));
        }
        VRef attn = tape.add_rowvec(
            tape.matmul_nt(tape.cols_concat(head_outs), tape.param(l.wo.v, grad_of(l.wo))),
            tape.param(l.bo.v, grad_of(l.bo)));
        if (drop) attn = tape.dropout(attn, opts.dropout, *opts.rng);
        x = tape.add(x, attn);

        VRef ln2g = tape.param(l.ln2_g.v, grad_of(l.ln2_g));
        VRef ln2b = tape.param(l.ln2_b.v, grad_of(l.ln2_b));
        VRef f = tape.layer_norm(x, ln2g, ln2b, static_cast<T>(1e-5));
        VRef h1 = tape.gelu(tape.add_rowvec(tape.matmul_nt(f, tape.param(l.w1.v, grad_of(l.w1))),
                                            tape.param(l.b1.v, grad_of(l.b1))));
        VRef h2 = tape.add_rowvec(tape.matmul_nt(h1, tape.param(l.w2.v, grad_of(l.w2))),
                                  tape.param(l.b2.v, grad_of(l.b2)));
        if (drop) h2 = tape.dropout(h2, opts.dropout, *opts.rng);
        x = tape.add(x, h2);
    }
    VRef lnfg = tape.param(params.lnf_g.v, grad_of(params.lnf_g));
    VRef lnfb = tape.param(params.lnf_b.v, grad_of(params.lnf_b));
    return tape.layer_norm(x, lnfg, lnfb, static_cast<T>(1e-5));
}

// Standalone forward pass; returns the L x d_model hidden states.
template <typename T>
Mat<T> encode(const BackboneConfig& cfg, BackboneParams<T>& params, const MaskedInput& input,
              const EncodeOptions<T>& opts = {}) {
    Tape<T> tape;
    VRef h = encode_on_tape(tape, cfg, params, input, opts, /*with_grad=*/false);
    return tape.to_mat(h);
}

// Hidden vectors at each segment's terminal EOS token, in segment order.
template <typename T>
std::vector<std::vector<T>> pool_eos(const Mat<T>& hidden, const MaskedInput& input) {
    std::vector<std::vector<T>> out;
    out.reserve(input.segments.size());
    for (const auto& seg : input.segments) {
        if (seg.length() < 1 || input.tokens[seg.end - 1] != kEosId)
            throw DataError("pool_eos: segment does not end in EOS");
        const T* row = hidden.row_ptr(seg.end - 1);
        out.emplace_back(row, row + hidden.cols);
    }
    return out;
}

// Tape variant: row refs at EOS positions, so gradients flow through pooling.
template <typename T>
std::vector<VRef> pool_eos_refs(Tape<T>& tape, VRef hidden, const MaskedInput& input) {
    std::vector<VRef> out;
    out.reserve(input.segments.size());
    for (const auto& seg : input.segments) {
        if (seg.length() < 1 || input.tokens[seg.end - 1] != kEosId)
            throw DataError("pool_eos: segment does not end in EOS");
        out.push_back(tape.row(hidden, seg.end - 1));
    }
    return out;
}

}  // namespace calm
