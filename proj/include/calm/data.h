#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "calm/common.h"

namespace calm {

// One unit of prediction: ordered named text components plus a binary label.
struct Document {
    std::string id;
    std::vector<std::pair<std::string, std::string>> components;  // schema order
    int label = 0;
};

struct Corpus {
    std::string split;  // train | validation | test
    std::vector<std::string> schema;
    std::vector<Document> documents;
};

// Reserved token ids; the vocabulary is dense from 0.
inline constexpr int kPadId = 0;
inline constexpr int kStartId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumReserved = 4;

class Vocabulary {
public:
    Vocabulary();

    int add(const std::string& token);  // returns existing id if present
    int id_of(const std::string& token) const;  // kUnkId if unknown
    const std::string& token_of(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    void save(const std::string& path) const;  // token<TAB>id lines
    static Vocabulary load(const std::string& path);

    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

struct EncodedDocument {
    std::string id;
    std::vector<std::vector<int>> components;  // framed: [START] ... [EOS]
    int label = 0;

    int num_components() const { return static_cast<int>(components.size()); }
    int total_length() const {
        int t = 0;
        for (const auto& c : components) t += static_cast<int>(c.size());
        return t;
    }
};

// Lowercased alnum runs; everything else separates. Bytes >= 0x80 are kept so
// UTF-8 text tokenizes without being split mid-character.
std::vector<std::string> tokenize(const std::string& text);

// Line-delimited JSON: {"id": str, "label": int, "components": {name: text}}.
// Unknown component names are rejected; missing ones become empty strings.
Corpus load_corpus(const std::string& path, const std::vector<std::string>& schema,
                   int num_classes = 2, const std::string& split = "train");

// Keeps the minority class whole and samples the majority down to match, so
// the output always has equal class counts. Order is shuffled by seed.
Corpus balance_subsample(const Corpus& corpus, uint64_t seed);

// Tokens appearing >= min_count times, ordered by (count desc, token asc).
Vocabulary build_vocab(const Corpus& corpus, int min_count);

EncodedDocument encode_document(const Document& doc, const Vocabulary& vocab,
                                int max_component_length);

std::vector<EncodedDocument> encode_corpus(const Corpus& corpus, const Vocabulary& vocab,
                                           int max_component_length);

}  // namespace calm
