#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kgdst/knowledge.hpp"
#include "kgdst/model.hpp"
#include "kgdst/retrieval.hpp"

namespace kgdst {

enum class IntegrationMode { kOrdered, kShuffled };

struct AugmentedContext {
  // BOS, e_k tokens, <k>, ..., e_1 tokens, <k>, context tokens. Elements run
  // least similar to most similar, so the top-scored element sits next to
  // the dialog context.
  std::vector<int> tokens;
  std::vector<int> provenance;  // element ids, in token order
};

// Over-length handling drops elements from the front (least similar first);
// the dialog context itself is never truncated here.
AugmentedContext integrate(const RetrievalResult& result,
                           const KnowledgeBase& kb, const Vocabulary& vocab,
                           std::span<const int> ctx_tokens,
                           IntegrationMode mode, std::uint64_t seed,
                           int max_len);

// Controlled-recall composition: round(recall_target * |gold|) gold elements
// plus distinct non-gold distractors up to k, in a seeded uniform shuffle.
// kb must be TYPE_VALUE.
AugmentedContext oracle_integrate(const DialogState& gold,
                                  const KnowledgeBase& kb,
                                  const Vocabulary& vocab,
                                  std::span<const int> ctx_tokens, int k,
                                  double recall_target, std::uint64_t seed,
                                  int max_len);

}  // namespace kgdst
