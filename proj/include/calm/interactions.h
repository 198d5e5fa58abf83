#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calm/backbone.h"
#include "calm/common.h"
#include "calm/mat.h"
#include "calm/tape.h"

namespace calm {

// Low-rank bilinear pairwise terms. Each component gets role-specific
// projections (u for the left slot, uhat for the right slot); each ordered
// pair i < j gets its own output map.
template <typename T>
struct InteractionParams {
    int rank = 8;
    T beta = static_cast<T>(0.5);

    struct Comp {
        PTensor<T> u;     // rank x d_model
        PTensor<T> uhat;  // rank x d_model
    };
    struct Pair {
        int i = 0, j = 0;
        PTensor<T> wout;  // C x rank
    };
    std::vector<Comp> comps;
    std::vector<Pair> pairs;

    int num_components() const { return static_cast<int>(comps.size()); }

    // Projections start as small Gaussians, output maps at zero, so training
    // starts on the plain additive solution path.
    void init(int m, int rank_, T beta_, int d_model, int n_classes, Rng& rng,
              T std_dev = static_cast<T>(0.02)) {
        if (rank_ < 1) throw DataError("interaction rank must be >= 1");
        if (beta_ < T(0) || beta_ > T(1)) throw DataError("beta must lie in [0,1]");
        rank = rank_;
        beta = beta_;
        comps.resize(m);
        for (auto& c : comps) {
            c.u.init(rank, d_model);
            for (auto& x : c.u.v.a) x = static_cast<T>(rng.gauss()) * std_dev;
            c.uhat.init(rank, d_model);
            for (auto& x : c.uhat.v.a) x = static_cast<T>(rng.gauss()) * std_dev;
        }
        pairs.clear();
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                Pair p;
                p.i = i;
                p.j = j;
                p.wout.init(n_classes, rank);
                pairs.push_back(std::move(p));
            }
    }

    const Pair& pair_at(int i, int j) const {
        for (const auto& p : pairs)
            if (p.i == i && p.j == j) return p;
        throw DataError("no interaction pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    Pair& pair_at(int i, int j) {
        return const_cast<Pair&>(static_cast<const InteractionParams*>(this)->pair_at(i, j));
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& c : comps) n += c.u.v.size() + c.uhat.v.size();
        for (const auto& p : pairs) n += p.wout.v.size();
        return n;
    }

    template <typename F>
    void visit(F&& f) {
        for (size_t i = 0; i < comps.size(); ++i) {
            f("inter.comp" + std::to_string(i) + ".u", comps[i].u);
            f("inter.comp" + std::to_string(i) + ".uhat", comps[i].uhat);
        }
        for (auto& p : pairs)
            f("inter.pair" + std::to_string(p.i) + "_" + std::to_string(p.j) + ".wout", p.wout);
    }
};

// l_ij = wout_ij * ((U_i h_i) (.) (Uhat_j h_j)), for i < j.
template <typename T>
VRef pair_logit_refs(Tape<T>& tape, InteractionParams<T>& params, int i, int j, VRef h_i,
                     VRef h_j, bool with_grad = true) {
    if (i >= j) throw DataError("pair_logit requires i < j");
    auto grad_of = [&](PTensor<T>& t) { return with_grad ? &t.g : nullptr; };
    auto& ci = params.comps[i];
    auto& cj = params.comps[j];
    auto& pr = params.pair_at(i, j);
    VRef left = tape.matmul_nt(h_i, tape.param(ci.u.v, grad_of(ci.u)));
    VRef right = tape.matmul_nt(h_j, tape.param(cj.uhat.v, grad_of(cj.uhat)));
    VRef had = tape.mul(left, right);
    return tape.matmul_nt(had, tape.param(pr.wout.v, grad_of(pr.wout)));
}

// Plain (non-tape) evaluation, used by tests and exports.
template <typename T>
std::vector<T> pair_logit(const InteractionParams<T>& params, int i, int j,
                          const std::vector<T>& h_i, const std::vector<T>& h_j) {
    if (i >= j) throw DataError("pair_logit requires i < j");
    const auto& ci = params.comps[i];
    const auto& cj = params.comps[j];
    const auto& pr = params.pair_at(i, j);
    int r = params.rank;
    int d = static_cast<int>(h_i.size());
    std::vector<T> had(r);
    for (int a = 0; a < r; ++a) {
        T l = T(0), rt = T(0);
        for (int c = 0; c < d; ++c) {
            l += ci.u.v.at(a, c) * h_i[c];
            rt += cj.uhat.v.at(a, c) * h_j[c];
        }
        had[a] = l * rt;
    }
    int n_classes = pr.wout.v.rows;
    std::vector<T> out(n_classes, T(0));
    for (int c = 0; c < n_classes; ++c)
        for (int a = 0; a < r; ++a) out[c] += pr.wout.v.at(c, a) * had[a];
    return out;
}

// z = (1-beta)/M * sum l_i + beta/(M choose 2) * sum l_ij + b
template <typename T>
std::vector<T> calm2_aggregate(const std::vector<std::vector<T>>& comp_logits,
                               const std::vector<std::vector<T>>& pair_logits,
                               const std::vector<T>& bias, T beta) {
    int m = static_cast<int>(comp_logits.size());
    if (m < 2 && beta > T(0)) throw DataError("calm2_aggregate needs M >= 2 when beta > 0");
    if (comp_logits.empty()) throw DataError("calm2_aggregate: empty logit list");
    size_t n_classes = bias.size();
    std::vector<T> z(n_classes, T(0));
    for (const auto& l : comp_logits)
        for (size_t c = 0; c < n_classes; ++c) z[c] += l[c];
    T wa = (T(1) - beta) / static_cast<T>(m);
    for (auto& x : z) x *= wa;
    if (!pair_logits.empty()) {
        T wp = beta / static_cast<T>(m * (m - 1) / 2);
        for (const auto& l : pair_logits)
            for (size_t c = 0; c < n_classes; ++c) z[c] += wp * l[c];
    }
    for (size_t c = 0; c < n_classes; ++c) z[c] += bias[c];
    return z;
}

// Dense cost of the text-level interaction variant: every pair concatenated
// and re-encoded, plus the single-component passes. Reported for comparison
// only; there is no trained path behind it.
inline uint64_t textpair_cost_estimate(const std::vector<int>& lengths) {
    uint64_t singles = 0;
    for (int l : lengths) {
        if (l <= 0) throw DataError("textpair_cost_estimate: lengths must be positive");
        singles += static_cast<uint64_t>(l) * l;
    }
    uint64_t pairs = 0;
    for (size_t i = 0; i < lengths.size(); ++i)
        for (size_t j = i + 1; j < lengths.size(); ++j) {
            uint64_t s = static_cast<uint64_t>(lengths[i]) + lengths[j];
            pairs += s * s;
        }
    return singles + pairs;
}

}  // namespace calm
