#include <cmath>

#include "calm/interactions.h"
#include "calm/model.h"
#include "doctest.h"
#include "helpers.h"

using namespace calm;
using namespace testutil;

namespace {

// Hand-built rank-1 params over a 1-d hidden space for the scalar examples.
InteractionParams<double> scalar_params() {
    InteractionParams<double> p;
    Rng rng(1);
    p.init(2, 1, 0.5, 1, 2, rng);
    p.comps[0].u.v.a = {1.0};
    p.comps[1].uhat.v.a = {1.0};
    p.pair_at(0, 1).wout.v.a = {1.0, -1.0};
    return p;
}

}  // namespace

TEST_SUITE("interactions") {

TEST_CASE("scalar bilinear pair logit") {
    auto p = scalar_params();
    double a = 1.7, b = -0.6;
    auto l = pair_logit(p, 0, 1, std::vector<double>{a}, std::vector<double>{b});
    CHECK(l[0] == doctest::Approx(a * b));
    CHECK(l[1] == doctest::Approx(-a * b));
}

TEST_CASE("pair logit is bilinear") {
    auto p = scalar_params();
    auto zero = pair_logit(p, 0, 1, {0.0}, {0.9});
    CHECK(zero[0] == 0.0);
    CHECK(zero[1] == 0.0);
    auto base = pair_logit(p, 0, 1, {1.1}, {0.9});
    auto scaled = pair_logit(p, 0, 1, {3.3}, {0.9});
    CHECK(scaled[0] == doctest::Approx(3.0 * base[0]));
    CHECK(scaled[1] == doctest::Approx(3.0 * base[1]));
}

TEST_CASE("pair logit requires i < j") {
    auto p = scalar_params();
    CHECK_THROWS_AS(pair_logit(p, 1, 0, {1.0}, {1.0}), DataError);
    CHECK_THROWS_AS(pair_logit(p, 1, 1, {1.0}, {1.0}), DataError);
}

TEST_CASE("calm2 aggregate blends additive and pair terms") {
    // beta = 0 degenerates to the calm aggregate
    auto z0 = calm2_aggregate<double>({{2, 0}, {0, 2}}, {}, {1, 1}, 0.0);
    auto z_calm = aggregate_logits<double>({{2, 0}, {0, 2}}, {1, 1});
    CHECK(z0 == z_calm);

    // beta = 1 with a single pair
    auto z1 = calm2_aggregate<double>({{5, 5}, {7, 7}}, {{1, -1}}, {0, 0}, 1.0);
    CHECK(z1[0] == doctest::Approx(1.0));
    CHECK(z1[1] == doctest::Approx(-1.0));

    // M=3, beta=0.5, all l_i=[2,0], all l_ij=[0,2]
    auto z2 = calm2_aggregate<double>({{2, 0}, {2, 0}, {2, 0}}, {{0, 2}, {0, 2}, {0, 2}},
                                      {0, 0}, 0.5);
    CHECK(z2[0] == doctest::Approx(1.0));
    CHECK(z2[1] == doctest::Approx(1.0));

    CHECK_THROWS_AS(calm2_aggregate<double>({{1, 1}}, {}, {0, 0}, 0.5), DataError);
}

TEST_CASE("interaction parameter count matches the closed form") {
    for (auto [m, r] : std::vector<std::pair<int, int>>{{2, 1}, {4, 8}, {6, 16}}) {
        InteractionParams<float> p;
        Rng rng(2);
        int d = 8, n_classes = 2;
        p.init(m, r, 0.5f, d, n_classes, rng);
        size_t expected = 2ull * m * r * d + static_cast<size_t>(m) * (m - 1) / 2 * n_classes * r;
        CHECK(p.param_count() == expected);
        CHECK(p.pairs.size() == static_cast<size_t>(m) * (m - 1) / 2);
    }
}

TEST_CASE("calm2 forward exposes one term per unordered pair") {
    BackboneConfig cfg = tiny_cfg();
    auto model = random_model<float>(Variant::calm2, 4, cfg, 3, 16, 8);
    Rng rng(4);
    EncodedDocument doc = random_doc(rng, 4, 4, 16);
    auto b = calm2_forward(model, doc);
    CHECK(b.pair_terms.size() == 6);
    CHECK(b.comp_logits.size() == 4);
}

TEST_CASE("zero interaction maps reduce to a reweighted calm breakdown") {
    // w_out starts at zero by construction, so a freshly built calm2 model is
    // already on the additive solution path
    BackboneConfig cfg = tiny_cfg();
    auto model2 = random_model<float>(Variant::calm2, 3, cfg, 5, 16, 4, 0.25f);

    ModelParams<float> model1;
    model1.init(Variant::calm, make_schema(3), make_vocab(16), cfg, 5);
    model1.backbone = model2.backbone;
    for (int i = 0; i < 3; ++i) {
        model1.heads.heads[i].w.v = model2.heads.heads[i].w.v;
        model1.heads.heads[i].b.v = model2.heads.heads[i].b.v;
    }
    model1.heads.bias.v = model2.heads.bias.v;

    Rng rng(6);
    EncodedDocument doc = random_doc(rng, 3, 5, 16);
    auto b2 = calm2_forward(model2, doc);
    auto b1 = packed_forward(model1, doc);
    for (const auto& pt : b2.pair_terms) {
        CHECK(pt.logits[0] == 0.0f);
        CHECK(pt.logits[1] == 0.0f);
    }
    for (int i = 0; i < 3; ++i) CHECK(b2.comp_logits[i] == b1.comp_logits[i]);
    float beta = 0.25f;
    for (int c = 0; c < 2; ++c) {
        float expected = (1.0f - beta) * (b1.z[c] - b1.bias[c]) + b1.bias[c];
        CHECK(b2.z[c] == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("beta = 0 makes calm2 equal calm exactly") {
    BackboneConfig cfg = tiny_cfg();
    auto model2 = random_model<float>(Variant::calm2, 3, cfg, 7, 16, 4, 0.0f);
    // nonzero interactions must not matter at beta = 0
    Rng rng(8);
    for (auto& pr : model2.inter->pairs)
        for (auto& x : pr.wout.v.a) x = (float)rng.gauss();

    ModelParams<float> model1;
    model1.init(Variant::calm, make_schema(3), make_vocab(16), cfg, 7);
    model1.backbone = model2.backbone;
    for (int i = 0; i < 3; ++i) {
        model1.heads.heads[i].w.v = model2.heads.heads[i].w.v;
        model1.heads.heads[i].b.v = model2.heads.heads[i].b.v;
    }
    model1.heads.bias.v = model2.heads.bias.v;

    EncodedDocument doc = random_doc(rng, 3, 5, 16);
    auto b2 = calm2_forward(model2, doc);
    auto b1 = packed_forward(model1, doc);
    CHECK(b2.z == b1.z);
}

TEST_CASE("editing a component touches only its own pairs") {
    BackboneConfig cfg = tiny_cfg(16, 1, 2, 24, 128);
    auto model = random_model<float>(Variant::calm2, 4, cfg, 9, 16, 4);
    Rng rng(10);
    // give the pair maps real weights
    for (auto& pr : model.inter->pairs)
        for (auto& x : pr.wout.v.a) x = (float)(rng.gauss() * 0.1);

    EncodedDocument doc = random_doc(rng, 4, 5, 16);
    int edit = 2;
    EncodedDocument edited = doc;
    edited.components[edit] = random_component(rng, 5, 16);

    auto a = calm2_forward(model, doc);
    auto b = calm2_forward(model, edited);
    for (int i = 0; i < 4; ++i) {
        if (i == edit) continue;
        CHECK(a.comp_logits[i] == b.comp_logits[i]);
    }
    for (size_t k = 0; k < a.pair_terms.size(); ++k) {
        const auto& pa = a.pair_terms[k];
        const auto& pb = b.pair_terms[k];
        if (pa.i != edit && pa.j != edit) {
            CHECK(pa.logits == pb.logits);
        }
    }
    // the edited component's own logit must move (almost surely)
    CHECK(a.comp_logits[edit] != b.comp_logits[edit]);
}

TEST_CASE("text-pair cost estimate") {
    CHECK(textpair_cost_estimate({3, 4}) == 74);  // 49 pairs + 25 singles
    CHECK(textpair_cost_estimate({10}) == 100);   // no pairs
    for (int m : {2, 3, 5}) {
        int L = 6;
        std::vector<int> lens(m, L);
        uint64_t pairs = static_cast<uint64_t>(m) * (m - 1) / 2 * (2 * L) * (2 * L);
        CHECK(textpair_cost_estimate(lens) == pairs + static_cast<uint64_t>(m) * L * L);
    }
}

}  // TEST_SUITE
