#include "calm/data.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "calm/rng.h"
#include "json.hpp"

namespace calm {

Vocabulary::Vocabulary() {
    tokens_ = {"[PAD]", "[START]", "[EOS]", "[UNK]"};
    for (int i = 0; i < kNumReserved; ++i) ids_[tokens_[i]] = i;
}

int Vocabulary::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    ids_[token] = id;
    return id;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    return tokens_.at(static_cast<size_t>(id));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary file: " + path);
    for (size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError("vocabulary line " + std::to_string(lineno) + ": missing tab");
        std::string token = line.substr(0, tab);
        int id = std::stoi(line.substr(tab + 1));
        if (id < kNumReserved) {
            if (token != v.tokens_[id])
                throw DataError("vocabulary line " + std::to_string(lineno) +
                                ": reserved id mismatch");
            continue;
        }
        int got = v.add(token);
        if (got != id)
            throw DataError("vocabulary line " + std::to_string(lineno) +
                            ": ids not dense (expected " + std::to_string(got) + ")");
    }
    return v;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char ch : text) {
        bool word_char = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                         (ch >= '0' && ch <= '9') || ch >= 0x80;
        if (word_char) {
            cur.push_back(static_cast<char>(ch >= 'A' && ch <= 'Z' ? ch - 'A' + 'a' : ch));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Corpus load_corpus(const std::string& path, const std::vector<std::string>& schema,
                   int num_classes, const std::string& split) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);
    Corpus corpus;
    corpus.split = split;
    corpus.schema = schema;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!rec.contains("id") || !rec.contains("label") || !rec.contains("components"))
            throw DataError("corpus line " + std::to_string(lineno) +
                            ": record needs id, label, components");
        Document doc;
        doc.id = rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
        if (!rec["label"].is_number_integer())
            throw DataError("corpus line " + std::to_string(lineno) + ": label must be integer");
        doc.label = rec["label"].get<int>();
        if (doc.label < 0 || doc.label >= num_classes)
            throw DataError("corpus line " + std::to_string(lineno) + ": label " +
                            std::to_string(doc.label) + " outside {0.." +
                            std::to_string(num_classes - 1) + "}");
        const auto& comps = rec["components"];
        if (!comps.is_object())
            throw DataError("corpus line " + std::to_string(lineno) + ": components must be object");
        for (auto it = comps.begin(); it != comps.end(); ++it) {
            if (std::find(schema.begin(), schema.end(), it.key()) == schema.end())
                throw DataError("corpus line " + std::to_string(lineno) +
                                ": unknown component name '" + it.key() + "'");
        }
        for (const auto& name : schema) {
            std::string text;
            if (comps.contains(name)) {
                if (!comps[name].is_string())
                    throw DataError("corpus line " + std::to_string(lineno) +
                                    ": component '" + name + "' must be a string");
                text = comps[name].get<std::string>();
            }
            doc.components.emplace_back(name, std::move(text));
        }
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

Corpus balance_subsample(const Corpus& corpus, uint64_t seed) {
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < corpus.documents.size(); ++i)
        (corpus.documents[i].label == 1 ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) throw DataError("cannot balance: a class is empty");

    Rng rng = Rng::substream(seed, 17);
    auto& minority = pos.size() <= neg.size() ? pos : neg;
    auto& majority = pos.size() <= neg.size() ? neg : pos;
    std::vector<size_t> sampled = majority;
    rng.shuffle(sampled);
    sampled.resize(minority.size());

    std::vector<size_t> keep = minority;
    keep.insert(keep.end(), sampled.begin(), sampled.end());
    rng.shuffle(keep);

    Corpus out;
    out.split = corpus.split;
    out.schema = corpus.schema;
    out.documents.reserve(keep.size());
    for (size_t i : keep) out.documents.push_back(corpus.documents[i]);
    return out;
}

Vocabulary build_vocab(const Corpus& corpus, int min_count) {
    if (corpus.documents.empty()) throw DataError("cannot build vocabulary from empty corpus");
    std::map<std::string, long> counts;  // ordered map keeps iteration deterministic
    for (const auto& doc : corpus.documents)
        for (const auto& [name, text] : doc.components)
            for (auto& tok : tokenize(text)) ++counts[tok];

    std::vector<std::pair<std::string, long>> by_freq(counts.begin(), counts.end());
    std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary vocab;
    for (const auto& [tok, count] : by_freq)
        if (count >= min_count) vocab.add(tok);
    return vocab;
}

EncodedDocument encode_document(const Document& doc, const Vocabulary& vocab,
                                int max_component_length) {
    if (max_component_length < 2) throw DataError("max_component_length must be >= 2");
    EncodedDocument enc;
    enc.id = doc.id;
    enc.label = doc.label;
    enc.components.reserve(doc.components.size());
    for (const auto& [name, text] : doc.components) {
        std::vector<int> ids;
        ids.push_back(kStartId);
        auto toks = tokenize(text);
        int budget = max_component_length - 2;
        for (int i = 0; i < static_cast<int>(toks.size()) && i < budget; ++i)
            ids.push_back(vocab.id_of(toks[i]));
        ids.push_back(kEosId);
        enc.components.push_back(std::move(ids));
    }
    return enc;
}

std::vector<EncodedDocument> encode_corpus(const Corpus& corpus, const Vocabulary& vocab,
                                           int max_component_length) {
    std::vector<EncodedDocument> out;
    out.reserve(corpus.documents.size());
    for (const auto& doc : corpus.documents)
        out.push_back(encode_document(doc, vocab, max_component_length));
    return out;
}

}  // namespace calm
