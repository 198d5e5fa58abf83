#pragma once

#include <cstdint>
#include <string>

#include "calm/data.h"

namespace calm {

// Synthetic corpora with known generating rules, used by tests and the demo
// workflow. Component texts are single value words so vocabularies stay tiny.

// Each of m components carries an integer value word ("val0".."val{n-1}");
// the label is 1 iff the value sum exceeds the population median.
Corpus make_additive_corpus(int n_docs, int m, int n_values, uint64_t seed,
                            const std::string& split);

// Same value layout, but labels are sampled from a logistic model of the
// centered sum, so the Bayes-optimal logit is exactly additive.
Corpus make_logistic_corpus(int n_docs, int m, int n_values, double scale, uint64_t seed,
                            const std::string& split);

// Two designated bit components ("on"/"off") whose parity is the label, plus
// one noise component. No additive function of the components can separate it.
Corpus make_xor_corpus(int n_docs, uint64_t seed, const std::string& split);

// One strongly separating component: value words are disjoint across classes.
Corpus make_separable_corpus(int n_docs, uint64_t seed, const std::string& split);

void save_corpus_jsonl(const Corpus& corpus, const std::string& path);

}  // namespace calm
