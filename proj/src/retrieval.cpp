#include "kgdst/retrieval.hpp"

#include <algorithm>
#include <cmath>

namespace kgdst {

double logistic_prob(double score) { return 1.0 / (1.0 + std::exp(-score)); }

Tape::ValueRef sim(Tape& tape, const EncodedSequence& a,
                   const EncodedSequence& b) {
  const Matrix& va = tape.value(a.first);
  const Matrix& vb = tape.value(b.first);
  if (va.cols() != vb.cols()) {
    throw ValidationError("sim: dimension mismatch");
  }
  return tape.dot(a.first, b.first);
}

Tape::ValueRef retrieval_loss(Tape& tape, Tape::ValueRef scores,
                              const std::vector<int>& labels) {
  return tape.bce_with_logits(scores, labels);
}

std::vector<std::vector<int>> tokenize_kb(const KnowledgeBase& kb,
                                          const ModelParams& params) {
  std::vector<std::vector<int>> out;
  out.reserve(kb.elements.size());
  for (const auto& e : kb.elements) {
    std::vector<int> toks = params.vocab.encode_text(e.text);
    const std::size_t limit =
        static_cast<std::size_t>(params.config.max_enc_len - 1);
    if (toks.size() > limit) toks.resize(limit);
    out.push_back(with_bos(toks));
  }
  return out;
}

Matrix kb_retrieval_reps(const KnowledgeBase& kb, const ModelParams& params) {
  Matrix reps(kb.size(), params.config.d_model);
  const std::vector<std::vector<int>> tokenized = tokenize_kb(kb, params);
  for (int id = 0; id < kb.size(); ++id) {
    ModelGraph graph(params, nullptr);
    EncodedSequence enc = graph.encode(tokenized[static_cast<std::size_t>(id)]);
    Tape::ValueRef rep = graph.retrieval_rep(enc.first, false);
    reps.row(id) = graph.tape().value(rep).row(0);
  }
  return reps;
}

RetrievalResult top_k_from_reps(std::span<const int> ctx_tokens,
                                const Matrix& kb_reps,
                                const ModelParams& params, int k) {
  if (k < 1 || k > kb_reps.rows()) {
    throw ValidationError("top_k: k out of range");
  }
  ModelGraph graph(params, nullptr);
  EncodedSequence ctx_enc = graph.encode(with_bos(ctx_tokens));
  Tape::ValueRef ctx_rep = graph.retrieval_rep(ctx_enc.first, false);
  const Matrix& cv = graph.tape().value(ctx_rep);
  std::vector<ScoredElement> scored;
  scored.reserve(static_cast<std::size_t>(kb_reps.rows()));
  for (int id = 0; id < kb_reps.rows(); ++id) {
    const double score = (cv.row(0).array() * kb_reps.row(id).array()).sum();
    scored.push_back({id, score, logistic_prob(score)});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredElement& a, const ScoredElement& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.id < b.id;
                   });
  scored.resize(static_cast<std::size_t>(k));
  return RetrievalResult{std::move(scored), k};
}

RetrievalResult top_k(std::span<const int> ctx_tokens, const KnowledgeBase& kb,
                      const ModelParams& params, int k) {
  if (k < 1 || k > kb.size()) {
    throw ValidationError("top_k: k out of range");
  }
  return top_k_from_reps(ctx_tokens, kb_retrieval_reps(kb, params), params, k);
}

std::pair<double, double> retrieval_metrics(const std::set<int>& retrieved,
                                            const std::set<int>& gold) {
  if (gold.empty()) return {1.0, 1.0};
  if (retrieved.empty()) {
    throw ValidationError("retrieval_metrics: empty retrieved with non-empty gold");
  }
  std::size_t inter = 0;
  for (int id : retrieved) inter += gold.count(id);
  return {static_cast<double>(inter) / static_cast<double>(retrieved.size()),
          static_cast<double>(inter) / static_cast<double>(gold.size())};
}

}  // namespace kgdst
