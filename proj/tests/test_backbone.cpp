#include <cmath>

#include "calm/backbone.h"
#include "calm/model.h"
#include "doctest.h"
#include "helpers.h"

using namespace calm;
using namespace testutil;

namespace {

template <typename T>
BackboneParams<T> random_backbone(const BackboneConfig& cfg, uint64_t seed) {
    BackboneParams<T> p;
    Rng rng(seed);
    p.init(cfg, rng);
    return p;
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("single segment equals an explicit all-true within-sequence mask") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 10;
    auto params = random_backbone<float>(cfg, 1);
    std::vector<int> toks{kStartId, 5, 6, 7, kEosId};
    MaskedInput packed = pack_segments({toks}, cfg.causal_within_segment);

    MaskedInput manual;
    manual.tokens = toks;
    manual.causal = cfg.causal_within_segment;
    for (int i = 0; i < (int)toks.size(); ++i) {
        manual.positions.push_back(i);
        manual.seg_of.push_back(0);
    }
    manual.segments.push_back({0, (int)toks.size()});

    Mat<float> h1 = encode(cfg, params, packed);
    Mat<float> h2 = encode(cfg, params, manual);
    CHECK(h1.a == h2.a);
}

TEST_CASE("identical segments pool to identical vectors") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 10;
    auto params = random_backbone<float>(cfg, 2);
    std::vector<int> seg{kStartId, 4, 8, kEosId};
    MaskedInput mi = pack_segments({seg, seg}, true);
    Mat<float> h = encode(cfg, params, mi);
    auto pooled = pool_eos(h, mi);
    REQUIRE(pooled.size() == 2);
    CHECK(pooled[0] == pooled[1]);
}

TEST_CASE("permuting segment order leaves per-segment states unchanged") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 12;
    auto params = random_backbone<float>(cfg, 3);
    std::vector<std::vector<int>> segs{{kStartId, 4, kEosId},
                                       {kStartId, 5, 6, kEosId},
                                       {kStartId, 7, 8, 9, kEosId}};
    // oracle: independent per-segment passes
    std::vector<std::vector<float>> solo;
    for (const auto& s : segs) {
        MaskedInput mi = pack_segments({s}, true);
        solo.push_back(pool_eos(encode(cfg, params, mi), mi)[0]);
    }
    for (auto order : std::vector<std::vector<int>>{{0, 1, 2}, {2, 0, 1}, {1, 2, 0}}) {
        std::vector<std::vector<int>> permuted;
        for (int idx : order) permuted.push_back(segs[idx]);
        MaskedInput mi = pack_segments(permuted, true);
        auto pooled = pool_eos(encode(cfg, params, mi), mi);
        for (size_t k = 0; k < order.size(); ++k) CHECK(pooled[k] == solo[order[k]]);
    }
}

TEST_CASE("pool_eos returns one vector per segment, in order") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 10;
    auto params = random_backbone<float>(cfg, 4);
    MaskedInput mi = pack_segments(
        {{kStartId, kEosId}, {kStartId, 5, kEosId}, {kStartId, 6, 7, kEosId}}, true);
    Mat<float> h = encode(cfg, params, mi);
    auto pooled = pool_eos(h, mi);
    REQUIRE(pooled.size() == 3);
    for (int s = 0; s < 3; ++s) {
        const float* row = h.row_ptr(mi.segments[s].end - 1);
        for (int c = 0; c < cfg.d_model; ++c) CHECK(pooled[s][c] == row[c]);
    }
}

TEST_CASE("pool_eos on a single segment is the last hidden state") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 10;
    auto params = random_backbone<float>(cfg, 5);
    MaskedInput mi = pack_segments({{kStartId, 4, 5, kEosId}}, true);
    Mat<float> h = encode(cfg, params, mi);
    auto pooled = pool_eos(h, mi);
    for (int c = 0; c < cfg.d_model; ++c) CHECK(pooled[0][c] == h.at(h.rows - 1, c));
}

TEST_CASE("pool_eos rejects a segment that does not end in EOS") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 10;
    auto params = random_backbone<float>(cfg, 6);
    MaskedInput mi = pack_segments({{kStartId, 4, 5}}, true);
    Mat<float> h = encode(cfg, params, mi);
    CHECK_THROWS_AS(pool_eos(h, mi), DataError);
}

TEST_CASE("packed encode matches independent per-segment encodes") {
    for (bool causal : {true, false}) {
        for (uint64_t seed = 0; seed < 6; ++seed) {
            BackboneConfig cfg = tiny_cfg(16, 2, 2, 24, 128);
            cfg.vocab_size = 20;
            cfg.causal_within_segment = causal;
            auto params = random_backbone<float>(cfg, seed + 10);
            Rng rng(seed);
            int m = 2 + (int)rng.uniform_int(7);
            std::vector<std::vector<int>> segs;
            for (int i = 0; i < m; ++i) segs.push_back(random_component(rng, 10, 16));
            MaskedInput packed = pack_segments(segs, causal);
            auto pooled = pool_eos(encode(cfg, params, packed), packed);
            for (int i = 0; i < m; ++i) {
                MaskedInput solo = pack_segments({segs[i]}, causal);
                auto ref = pool_eos(encode(cfg, params, solo), solo)[0];
                for (int c = 0; c < cfg.d_model; ++c) {
                    double rel = std::fabs(pooled[i][c] - ref[c]) /
                                 std::max({std::fabs((double)ref[c]), 1e-8});
                    CHECK(rel <= 1e-5);
                }
            }
        }
    }
}

TEST_CASE("packed equivalence in double precision") {
    BackboneConfig cfg = tiny_cfg(16, 2, 2, 24, 128);
    cfg.vocab_size = 20;
    auto params = random_backbone<double>(cfg, 21);
    Rng rng(9);
    std::vector<std::vector<int>> segs;
    for (int i = 0; i < 5; ++i) segs.push_back(random_component(rng, 10, 16));
    MaskedInput packed = pack_segments(segs, true);
    auto pooled = pool_eos(encode(cfg, params, packed), packed);
    for (int i = 0; i < 5; ++i) {
        MaskedInput solo = pack_segments({segs[i]}, true);
        auto ref = pool_eos(encode(cfg, params, solo), solo)[0];
        for (int c = 0; c < cfg.d_model; ++c) {
            double rel = std::fabs(pooled[i][c] - ref[c]) / std::max(std::fabs(ref[c]), 1e-12);
            CHECK(rel <= 1e-10);
        }
    }
}

TEST_CASE("attention is exactly zero across segments") {
    for (bool causal : {true, false}) {
        BackboneConfig cfg = tiny_cfg();
        cfg.vocab_size = 12;
        cfg.causal_within_segment = causal;
        auto params = random_backbone<float>(cfg, 7);
        MaskedInput mi =
            pack_segments({{kStartId, 4, kEosId}, {kStartId, 5, 6, kEosId}}, causal);
        AttnTrace<float> trace;
        EncodeOptions<float> opts;
        opts.trace = &trace;
        Tape<float> tape;
        encode_on_tape(tape, cfg, params, mi, opts, false);
        REQUIRE((int)trace.probs.size() == cfg.n_layers * cfg.n_heads);
        for (const auto& probs : trace.probs) {
            for (int u = 0; u < mi.length(); ++u)
                for (int v = 0; v < mi.length(); ++v)
                    if (!mi.allow(u, v)) CHECK(probs.at(u, v) == 0.0f);
        }
    }
}

TEST_CASE("causal masking also zeroes future positions in the trace") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 12;
    cfg.causal_within_segment = true;
    auto params = random_backbone<float>(cfg, 8);
    MaskedInput mi = pack_segments({{kStartId, 4, 5, kEosId}}, true);
    AttnTrace<float> trace;
    EncodeOptions<float> opts;
    opts.trace = &trace;
    Tape<float> tape;
    encode_on_tape(tape, cfg, params, mi, opts, false);
    for (const auto& probs : trace.probs)
        for (int u = 0; u < mi.length(); ++u)
            for (int v = u + 1; v < mi.length(); ++v) CHECK(probs.at(u, v) == 0.0f);
}

TEST_CASE("encode is deterministic") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 10;
    auto params = random_backbone<float>(cfg, 9);
    MaskedInput mi = pack_segments({{kStartId, 4, 5, kEosId}, {kStartId, 6, kEosId}}, true);
    CHECK(encode(cfg, params, mi).a == encode(cfg, params, mi).a);
}

TEST_CASE("position overflow and out-of-vocab tokens are rejected") {
    BackboneConfig cfg = tiny_cfg(8, 1, 2, 12, 4);
    cfg.vocab_size = 10;
    auto params = random_backbone<float>(cfg, 10);
    MaskedInput long_seg = pack_segments({{kStartId, 4, 5, 6, kEosId}}, true);  // positions 0..4
    CHECK_THROWS_AS(encode(cfg, params, long_seg), DataError);
    MaskedInput bad_tok = pack_segments({{kStartId, 99, kEosId}}, true);
    CHECK_THROWS_AS(encode(cfg, params, bad_tok), DataError);
}

TEST_CASE("gradient of a gathered-row sum is one on that row") {
    Mat<double> table(5, 3);
    Rng rng(11);
    for (auto& x : table.a) x = rng.gauss();
    Mat<double> grad(5, 3);
    Tape<double> tape;
    VRef row = tape.gather_rows(table, &grad, {3});
    tape.backward(tape.sum_all(row));
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 3; ++c) CHECK(grad.at(r, c) == (r == 3 ? 1.0 : 0.0));
}

TEST_CASE("parameters off the loss path get zero gradients") {
    BackboneConfig cfg = tiny_cfg();
    cfg.vocab_size = 10;
    ModelParams<double> model;
    model.init(Variant::calm, make_schema(2), make_vocab(6), cfg, 12);
    randomize_heads(model, 13);
    EncodedDocument doc;
    doc.id = "d";
    doc.components = {{kStartId, 4, kEosId}, {kStartId, 5, kEosId}};
    doc.label = 1;
    model.zero_grad();
    Tape<double> tape;
    EncodeOptions<double> opts;
    tape.backward(doc_loss_refs(tape, model, doc, opts));
    // vocab row 6 never appears in the document
    for (int c = 0; c < cfg.d_model; ++c) CHECK(model.backbone.tok_emb.g.at(6, c) == 0.0);
    // positions beyond the longest segment are untouched
    for (int c = 0; c < cfg.d_model; ++c) CHECK(model.backbone.pos_emb.g.at(10, c) == 0.0);
}

TEST_CASE("analytic gradients match finite differences on a tiny model") {
    BackboneConfig cfg = tiny_cfg(8, 1, 2, 12, 16);
    cfg.vocab_size = 10;
    ModelParams<double> model;
    model.init(Variant::calm, make_schema(2), make_vocab(6), cfg, 14);
    Rng jitter(15);
    model.visit([&](const std::string&, PTensor<double>& t) {
        for (auto& x : t.v.a) x += jitter.gauss() * 0.05;
    });
    EncodedDocument doc;
    doc.id = "d";
    doc.components = {{kStartId, 4, 5, kEosId}, {kStartId, 6, kEosId}};
    doc.label = 0;

    auto loss_value = [&]() {
        Tape<double> tape;
        EncodeOptions<double> opts;
        return tape.scalar(doc_loss_refs(tape, model, doc, opts));
    };
    model.zero_grad();
    {
        Tape<double> tape;
        EncodeOptions<double> opts;
        tape.backward(doc_loss_refs(tape, model, doc, opts));
    }
    const double h = 1e-5;
    double worst = 0;
    model.visit([&](const std::string&, PTensor<double>& t) {
        for (size_t i = 0; i < t.v.a.size(); ++i) {
            double orig = t.v.a[i];
            t.v.a[i] = orig + h;
            double lp = loss_value();
            t.v.a[i] = orig - h;
            double lm = loss_value();
            t.v.a[i] = orig;
            double fd = (lp - lm) / (2 * h);
            double an = t.g.a[i];
            double scale = std::max({std::fabs(fd), std::fabs(an)});
            if (scale > 1e-7) worst = std::max(worst, std::fabs(fd - an) / scale);
            else CHECK(std::fabs(fd - an) < 1e-8);
        }
    });
    CHECK(worst < 1e-4);
}

TEST_CASE("attention cost formulas") {
    std::vector<int> l34{3, 4};
    CHECK(attention_cost(l34, CostMode::independent) == 25);
    CHECK(attention_cost(l34, CostMode::padded) == 32);
    CHECK(attention_cost(l34, CostMode::packed_dense) == 49);
    CHECK(attention_cost(l34, CostMode::packed_blocksparse) == 25);

    std::vector<int> l10{10};
    for (auto mode : {CostMode::independent, CostMode::padded, CostMode::packed_dense,
                      CostMode::packed_blocksparse})
        CHECK(attention_cost(l10, mode) == 100);

    // M equal-length components: padded equals independent, dense is M-fold
    for (int m : {2, 4, 7}) {
        std::vector<int> eq(m, 5);
        CHECK(attention_cost(eq, CostMode::padded) == attention_cost(eq, CostMode::independent));
        CHECK(attention_cost(eq, CostMode::packed_dense) ==
              static_cast<uint64_t>(m) * attention_cost(eq, CostMode::independent));
    }

    CHECK_THROWS_AS(attention_cost({}, CostMode::independent), DataError);
    CHECK_THROWS_AS(attention_cost({3, 0}, CostMode::padded), DataError);
}

TEST_CASE("sum of squares never exceeds the squared sum") {
    Rng rng(16);
    for (int trial = 0; trial < 50; ++trial) {
        int m = 2 + (int)rng.uniform_int(8);
        std::vector<int> lens;
        for (int i = 0; i < m; ++i) lens.push_back(1 + (int)rng.uniform_int(20));
        CHECK(attention_cost(lens, CostMode::independent) <
              attention_cost(lens, CostMode::packed_dense));
    }
}

}  // TEST_SUITE
