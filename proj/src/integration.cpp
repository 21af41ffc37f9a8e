#include "kgdst/integration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace kgdst {

namespace {

std::vector<int> element_tokens(const KnowledgeBase& kb, const Vocabulary& vocab,
                                int id) {
  return vocab.encode_text(kb.elements[static_cast<std::size_t>(id)].text);
}

// Assembles BOS + (element tokens + <k>)* + context from an ordered id list,
// dropping ids from `drop_order` until the sequence fits.
AugmentedContext assemble(const KnowledgeBase& kb, const Vocabulary& vocab,
                          std::span<const int> ctx_tokens,
                          std::vector<int> ordered_ids,
                          const std::vector<int>& drop_order, int max_len) {
  const std::size_t base_len = ctx_tokens.size() + 1;  // BOS + context
  if (base_len > static_cast<std::size_t>(max_len)) {
    throw ValidationError("integrate: dialog context alone exceeds max length");
  }
  auto total_len = [&](const std::vector<int>& ids) {
    std::size_t len = base_len;
    for (int id : ids) len += element_tokens(kb, vocab, id).size() + 1;
    return len;
  };
  for (int drop : drop_order) {
    if (total_len(ordered_ids) <= static_cast<std::size_t>(max_len)) break;
    std::erase(ordered_ids, drop);
  }
  AugmentedContext out;
  out.tokens.push_back(Vocabulary::kBos);
  out.provenance.push_back(-1);
  for (int id : ordered_ids) {
    const std::vector<int> toks = element_tokens(kb, vocab, id);
    out.tokens.insert(out.tokens.end(), toks.begin(), toks.end());
    out.tokens.push_back(Vocabulary::kKnowSep);
    // The <k> marker belongs to its element.
    out.provenance.insert(out.provenance.end(), toks.size() + 1, id);
  }
  out.tokens.insert(out.tokens.end(), ctx_tokens.begin(), ctx_tokens.end());
  out.provenance.insert(out.provenance.end(), ctx_tokens.size(), -1);
  return out;
}

}  // namespace

AugmentedContext integrate(const RetrievalResult& result,
                           const KnowledgeBase& kb, const Vocabulary& vocab,
                           std::span<const int> ctx_tokens,
                           IntegrationMode mode, std::uint64_t seed,
                           int max_len) {
  if (result.ranked.empty()) {
    throw ValidationError("integrate: empty retrieval result");
  }
  // Least similar first; the top-scored element ends up adjacent to the
  // context.
  std::vector<int> ordered;
  ordered.reserve(result.ranked.size());
  for (auto it = result.ranked.rbegin(); it != result.ranked.rend(); ++it) {
    ordered.push_back(it->id);
  }
  if (mode == IntegrationMode::kShuffled) {
    std::mt19937_64 rng(seed);
    std::shuffle(ordered.begin(), ordered.end(), rng);
  }
  // Drop by ascending similarity regardless of presentation order.
  std::vector<int> drop_order;
  for (auto it = result.ranked.rbegin(); it != result.ranked.rend(); ++it) {
    drop_order.push_back(it->id);
  }
  return assemble(kb, vocab, ctx_tokens, std::move(ordered), drop_order,
                  max_len);
}

AugmentedContext oracle_integrate(const DialogState& gold,
                                  const KnowledgeBase& kb,
                                  const Vocabulary& vocab,
                                  std::span<const int> ctx_tokens, int k,
                                  double recall_target, std::uint64_t seed,
                                  int max_len) {
  if (kb.kind != KnowledgeKind::kTypeValue) {
    throw ValidationError("oracle_integrate: kb must be TYPE_VALUE");
  }
  if (recall_target < 0.0 || recall_target > 1.0) {
    throw ValidationError("oracle_integrate: recall_target out of [0,1]");
  }
  if (k > kb.size()) {
    throw ValidationError("oracle_integrate: k exceeds kb size");
  }
  std::vector<int> gold_ids;
  for (const auto& e : kb.elements) {
    if (gold.contains(e.pair)) gold_ids.push_back(e.id);
  }
  if (k < static_cast<int>(gold_ids.size())) {
    throw ValidationError("oracle_integrate: k smaller than gold state");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(gold_ids.begin(), gold_ids.end(), rng);
  const int n_gold = static_cast<int>(
      std::llround(recall_target * static_cast<double>(gold_ids.size())));
  gold_ids.resize(static_cast<std::size_t>(n_gold));

  std::vector<int> distractors;
  distractors.reserve(static_cast<std::size_t>(kb.size()));
  for (const auto& e : kb.elements) {
    if (!gold.contains(e.pair)) distractors.push_back(e.id);
  }
  std::shuffle(distractors.begin(), distractors.end(), rng);
  const std::size_t n_fill = std::min(
      static_cast<std::size_t>(k - n_gold), distractors.size());
  distractors.resize(n_fill);

  std::vector<int> chosen = gold_ids;
  chosen.insert(chosen.end(), distractors.begin(), distractors.end());
  std::shuffle(chosen.begin(), chosen.end(), rng);
  return assemble(kb, vocab, ctx_tokens, chosen, chosen, max_len);
}

}  // namespace kgdst
