#include <cmath>

#include "calm/checkpoint.h"
#include "doctest.h"
#include "helpers.h"

using namespace calm;
using namespace testutil;

TEST_SUITE("checkpoint") {

TEST_CASE("save and load round trip is value-exact") {
    BackboneConfig cfg = tiny_cfg();
    auto model = random_model<float>(Variant::calm, 3, cfg, 1);
    model.f1_threshold = 0.37;
    auto dir = fresh_dir("ckpt_roundtrip");
    save_checkpoint(model, dir + "/m.json");
    auto back = load_checkpoint<float>(dir + "/m.json");

    CHECK(back.variant == model.variant);
    CHECK(back.schema == model.schema);
    CHECK(back.vocab.tokens() == model.vocab.tokens());
    CHECK(back.cfg.d_model == model.cfg.d_model);
    REQUIRE(back.f1_threshold.has_value());
    CHECK(*back.f1_threshold == 0.37);

    bool all_equal = true;
    std::vector<std::pair<std::string, const Mat<float>*>> a, b;
    model.visit([&](const std::string& n, PTensor<float>& t) { a.emplace_back(n, &t.v); });
    back.visit([&](const std::string& n, PTensor<float>& t) { b.emplace_back(n, &t.v); });
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        all_equal &= a[i].second->a == b[i].second->a;
    }
    CHECK(all_equal);
}

TEST_CASE("identical models serialize to identical bytes") {
    BackboneConfig cfg = tiny_cfg();
    auto model = random_model<float>(Variant::calm2, 3, cfg, 2, 16, 4);
    auto dir = fresh_dir("ckpt_bytes");
    save_checkpoint(model, dir + "/a.json");
    save_checkpoint(model, dir + "/b.json");
    CHECK(read_file(dir + "/a.json") == read_file(dir + "/b.json"));
}

TEST_CASE("calm2 round trip keeps rank and beta") {
    BackboneConfig cfg = tiny_cfg();
    auto model = random_model<float>(Variant::calm2, 4, cfg, 3, 16, 8, 0.1f);
    auto dir = fresh_dir("ckpt_calm2");
    save_checkpoint(model, dir + "/m.json");
    auto back = load_checkpoint<float>(dir + "/m.json");
    REQUIRE(back.inter.has_value());
    CHECK(back.inter->rank == 8);
    CHECK(back.inter->beta == 0.1f);
    CHECK(back.inter->pairs.size() == 6);
}

TEST_CASE("load rejects missing or malformed files") {
    auto dir = fresh_dir("ckpt_bad");
    CHECK_THROWS_AS(load_checkpoint<float>(dir + "/missing.json"), DataError);
    write_file(dir + "/junk.json", "{\"format\": \"other\"}");
    CHECK_THROWS_AS(load_checkpoint<float>(dir + "/junk.json"), DataError);
    write_file(dir + "/notjson.json", "not json at all");
    CHECK_THROWS_AS(load_checkpoint<float>(dir + "/notjson.json"), DataError);
}

TEST_CASE("non-finite parameters refuse to serialize") {
    BackboneConfig cfg = tiny_cfg();
    auto model = random_model<float>(Variant::calm, 2, cfg, 4);
    model.heads.heads[0].w.v.a[0] = std::numeric_limits<float>::quiet_NaN();
    auto dir = fresh_dir("ckpt_nan");
    CHECK_THROWS_AS(save_checkpoint(model, dir + "/m.json"), NumericError);
}

}  // TEST_SUITE
