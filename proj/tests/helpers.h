#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "calm/model.h"
#include "calm/rng.h"

namespace testutil {

inline calm::Vocabulary make_vocab(int n_words) {
    calm::Vocabulary v;
    for (int i = 0; i < n_words; ++i) v.add("w" + std::to_string(i));
    return v;
}

inline calm::BackboneConfig tiny_cfg(int d_model = 8, int n_layers = 1, int n_heads = 2,
                                     int d_ff = 12, int max_position = 32) {
    calm::BackboneConfig cfg;
    cfg.d_model = d_model;
    cfg.n_layers = n_layers;
    cfg.n_heads = n_heads;
    cfg.d_ff = d_ff;
    cfg.max_position = max_position;
    return cfg;
}

inline std::vector<std::string> make_schema(int m) {
    std::vector<std::string> s;
    for (int i = 0; i < m; ++i) s.push_back("c" + std::to_string(i));
    return s;
}

// Random framed component: [START] + 0..max_inner tokens + [EOS].
inline std::vector<int> random_component(calm::Rng& rng, int max_inner, int vocab_words) {
    std::vector<int> toks{calm::kStartId};
    int inner = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_inner + 1)));
    for (int t = 0; t < inner; ++t)
        toks.push_back(calm::kNumReserved +
                       static_cast<int>(rng.uniform_int(static_cast<uint64_t>(vocab_words))));
    toks.push_back(calm::kEosId);
    return toks;
}

inline calm::EncodedDocument random_doc(calm::Rng& rng, int m, int max_inner, int vocab_words,
                                        const std::string& id = "doc") {
    calm::EncodedDocument doc;
    doc.id = id;
    for (int i = 0; i < m; ++i) doc.components.push_back(random_component(rng, max_inner, vocab_words));
    doc.label = static_cast<int>(rng.uniform_int(2));
    return doc;
}

template <typename T>
void randomize_heads(calm::ModelParams<T>& model, uint64_t seed, double scale = 0.1) {
    calm::Rng rng(seed);
    for (auto& h : model.heads.heads) {
        for (auto& x : h.w.v.a) x = static_cast<T>(rng.gauss() * scale);
        for (auto& x : h.b.v.a) x = static_cast<T>(rng.gauss() * scale);
    }
    for (auto& x : model.heads.bias.v.a) x = static_cast<T>(rng.gauss() * scale);
}

template <typename T>
calm::ModelParams<T> random_model(calm::Variant variant, int m, const calm::BackboneConfig& cfg,
                                  uint64_t seed, int vocab_words = 16, int rank = 4,
                                  T beta = static_cast<T>(0.5)) {
    calm::ModelParams<T> model;
    model.init(variant, make_schema(m), make_vocab(vocab_words), cfg, seed, rank, beta);
    randomize_heads(model, seed + 99);
    return model;
}

inline std::string fresh_dir(const std::string& name) {
    auto p = std::filesystem::path("test_tmp") / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

}  // namespace testutil
