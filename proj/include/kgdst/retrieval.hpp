#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "kgdst/autograd.hpp"
#include "kgdst/knowledge.hpp"
#include "kgdst/model.hpp"

namespace kgdst {

struct ScoredElement {
  int id = 0;
  double score = 0.0;
  double prob = 0.0;  // logistic(score)
};

struct RetrievalResult {
  std::vector<ScoredElement> ranked;  // score descending, id ascending on ties
  int k = 0;
};

double logistic_prob(double score);

// Dot product of the two first-token vectors.
Tape::ValueRef sim(Tape& tape, const EncodedSequence& a,
                   const EncodedSequence& b);

// Sum over elements of BCE(logistic(score_i), label_i). `scores` is n x 1.
Tape::ValueRef retrieval_loss(Tape& tape, Tape::ValueRef scores,
                              const std::vector<int>& labels);

// Scores every element with the current params; no gradients recorded.
// Ties broken by lower element id.
RetrievalResult top_k(std::span<const int> ctx_tokens, const KnowledgeBase& kb,
                      const ModelParams& params, int k);

// One retrieval representation per element (kb.size() x d); lets callers
// scoring many contexts against a fixed kb encode it once.
Matrix kb_retrieval_reps(const KnowledgeBase& kb, const ModelParams& params);
RetrievalResult top_k_from_reps(std::span<const int> ctx_tokens,
                                const Matrix& kb_reps,
                                const ModelParams& params, int k);

// Token renderings of every KB element, BOS-prefixed, truncated to the
// encoder limit; cached once per step by the training loop.
std::vector<std::vector<int>> tokenize_kb(const KnowledgeBase& kb,
                                          const ModelParams& params);

// (precision, recall); both 1 when gold is empty.
std::pair<double, double> retrieval_metrics(const std::set<int>& retrieved,
                                            const std::set<int>& gold);

}  // namespace kgdst
