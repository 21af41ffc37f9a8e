#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgdst/autograd.hpp"
#include "kgdst/corpus.hpp"

namespace kgdst {

// Word-level tokenizer: whitespace-separated, with . , ? ! ; : = ( ) split
// into single-char tokens. Hyphens and apostrophes stay in-word so slot
// names like "hotel-parking" and values like "don't" are single tokens.
std::vector<std::string> tokenize(const std::string& text);

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUserSep = 3;
  static constexpr int kSystemSep = 4;
  static constexpr int kKnowSep = 5;
  static constexpr int kUnk = 6;
  static constexpr int kNumReserved = 7;

  std::vector<std::string> tokens;  // reserved tokens first
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(tokens.size()); }
  int id(const std::string& token) const;  // UNK fallback
  std::vector<int> encode_text(const std::string& text) const;
  // Joins with single spaces; reserved tokens are skipped.
  std::string decode_tokens(std::span<const int> ids) const;

  // Deterministic: word tokens sorted lexicographically after the reserved
  // block. `texts` is every string the model may see or emit.
  static Vocabulary build(const std::vector<std::string>& texts);
  static Vocabulary build_from_corpus(const Corpus& corpus);
  static Vocabulary from_tokens(std::vector<std::string> tokens);
};

struct ModelConfig {
  int d_model = 64;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ff_mult = 4;
  int max_enc_len = 256;
  int max_dec_len = 64;
  int max_ctx_len = 96;  // dialog-context truncation, oldest turns first
  bool separate_retrieval_head = false;
};

// All trainable tensors, addressable by name. The shared encoder is the
// single source of truth for both retrieval and DST encodings: both paths
// read the same "enc*" tensors.
struct ModelParams {
  ModelConfig config;
  Vocabulary vocab;
  std::map<std::string, Matrix> tensors;

  void init(std::uint64_t seed);
  bool all_finite() const;
};

struct Gradients {
  std::map<std::string, Matrix> by_name;

  static Gradients zeros_like(const ModelParams& params);
  void zero();
  Matrix& at(const std::string& name) { return by_name.at(name); }
  const Matrix& at(const std::string& name) const { return by_name.at(name); }
};

struct EncodedSequence {
  Tape::ValueRef seq;    // length x d, final encoder layer
  Tape::ValueRef first;  // 1 x d, the BOS position
};

// Builds one forward pass on a tape. Pass grads = nullptr for inference
// (no backward closures are recorded).
class ModelGraph {
 public:
  ModelGraph(const ModelParams& params, Gradients* grads);

  Tape& tape() { return tape_; }
  const ModelParams& params() const { return params_; }

  // Requires tokens to begin with BOS and fit max_enc_len. PAD positions are
  // masked out of attention.
  EncodedSequence encode(std::span<const int> tokens);
  // Teacher-forced mean token NLL; target must be non-empty and end in EOS.
  Tape::ValueRef decode_loss(const EncodedSequence& encoded,
                             std::span<const int> target);
  // Greedy argmax decoding; stops at EOS or max_len. EOS is not included in
  // the returned sequence.
  std::vector<int> generate(const EncodedSequence& encoded, int max_len);
  // Optional 2-layer retrieval projection over a 1 x d first-token vector
  // (SEPARATE_HEAD mode); identity when the head is disabled.
  Tape::ValueRef retrieval_rep(Tape::ValueRef first, bool detach_encoder);

  void backward(Tape::ValueRef loss) { tape_.backward(loss); }

 private:
  Tape::ValueRef p(const std::string& name);
  Tape::ValueRef attention(Tape::ValueRef q_in, Tape::ValueRef kv_in,
                           const std::string& prefix, const Matrix* mask);
  Tape::ValueRef ff(Tape::ValueRef x, const std::string& prefix);
  Tape::ValueRef decoder_logits(const EncodedSequence& encoded,
                                std::span<const int> dec_input);
  Tape::ValueRef embed(std::span<const int> tokens);

  const ModelParams& params_;
  Tape tape_;
  std::map<std::string, Tape::ValueRef> leaf_cache_;
  Gradients* grads_;
};

// Dialog context token sequence for the given user turn, without BOS:
// role-separator tokens before each turn's words, oldest turns dropped
// first when over max_ctx_len.
std::vector<int> build_dialog_context(const Dialog& dialog,
                                      std::size_t user_turn,
                                      const Vocabulary& vocab, int max_ctx_len);

std::vector<int> with_bos(std::span<const int> tokens);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Matrix> m, v;
  long step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config);
void sgd_step(ModelParams& params, const Gradients& grads, double lr);

// Sinusoidal position table (max_len x d); deterministic.
Matrix positional_encoding(int max_len, int d_model);

}  // namespace kgdst
