#include "calm/synth.h"

#include <fstream>

#include "calm/rng.h"
#include "json.hpp"

namespace calm {

Corpus make_additive_corpus(int n_docs, int m, int n_values, uint64_t seed,
                            const std::string& split) {
    Corpus corpus;
    corpus.split = split;
    for (int i = 0; i < m; ++i) corpus.schema.push_back("comp" + std::to_string(i + 1));
    Rng rng = Rng::substream(seed, 41);
    int threshold = m * (n_values - 1) / 2;
    for (int d = 0; d < n_docs; ++d) {
        Document doc;
        doc.id = split + "-" + std::to_string(d);
        int sum = 0;
        for (int i = 0; i < m; ++i) {
            int v = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_values)));
            sum += v;
            doc.components.emplace_back(corpus.schema[i], "val" + std::to_string(v));
        }
        doc.label = sum > threshold ? 1 : 0;
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

Corpus make_logistic_corpus(int n_docs, int m, int n_values, double scale, uint64_t seed,
                            const std::string& split) {
    Corpus corpus;
    corpus.split = split;
    for (int i = 0; i < m; ++i) corpus.schema.push_back("comp" + std::to_string(i + 1));
    Rng rng = Rng::substream(seed, 44);
    double center = m * (n_values - 1) / 2.0;
    for (int d = 0; d < n_docs; ++d) {
        Document doc;
        doc.id = split + "-" + std::to_string(d);
        int sum = 0;
        for (int i = 0; i < m; ++i) {
            int v = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_values)));
            sum += v;
            doc.components.emplace_back(corpus.schema[i], "val" + std::to_string(v));
        }
        double p = 1.0 / (1.0 + std::exp(-scale * (sum - center)));
        doc.label = rng.uniform() < p ? 1 : 0;
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

Corpus make_xor_corpus(int n_docs, uint64_t seed, const std::string& split) {
    Corpus corpus;
    corpus.split = split;
    corpus.schema = {"bit_a", "bit_b", "noise"};
    Rng rng = Rng::substream(seed, 42);
    for (int d = 0; d < n_docs; ++d) {
        Document doc;
        doc.id = split + "-" + std::to_string(d);
        int a = static_cast<int>(rng.uniform_int(2));
        int b = static_cast<int>(rng.uniform_int(2));
        int noise = static_cast<int>(rng.uniform_int(8));
        doc.components.emplace_back("bit_a", a ? "on" : "off");
        doc.components.emplace_back("bit_b", b ? "on" : "off");
        doc.components.emplace_back("noise", "n" + std::to_string(noise));
        doc.label = a ^ b;
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

Corpus make_separable_corpus(int n_docs, uint64_t seed, const std::string& split) {
    Corpus corpus;
    corpus.split = split;
    corpus.schema = {"signal", "filler"};
    Rng rng = Rng::substream(seed, 43);
    for (int d = 0; d < n_docs; ++d) {
        Document doc;
        doc.id = split + "-" + std::to_string(d);
        int label = static_cast<int>(rng.uniform_int(2));
        int v = static_cast<int>(rng.uniform_int(4));
        doc.components.emplace_back("signal",
                                    (label ? "pos" : "neg") + std::to_string(v));
        doc.components.emplace_back("filler", "x" + std::to_string(rng.uniform_int(4)));
        doc.label = label;
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write corpus: " + path);
    for (const auto& doc : corpus.documents) {
        nlohmann::ordered_json j;
        j["id"] = doc.id;
        j["label"] = doc.label;
        nlohmann::ordered_json comps;
        for (const auto& [name, text] : doc.components) comps[name] = text;
        j["components"] = comps;
        out << j.dump() << '\n';
    }
}

}  // namespace calm
