#include "kgdst/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace kgdst {

namespace {
const char* kReservedTokens[] = {"<pad>", "<bos>", "<eos>", "<user>",
                                 "<system>", "<k>", "<unk>"};
constexpr double kMaskNegInf = -1e9;
// Relative offsets beyond +/- kRelClip share the two edge buckets.
constexpr int kRelClip = 8;

bool is_split_punct(char c) {
  switch (c) {
    case '.': case ',': case '?': case '!': case ';': case ':':
    case '=': case '(': case ')':
      return true;
    default:
      return false;
  }
}
}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(current);
      current.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_split_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      current += c;
    }
  }
  flush();
  return out;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode_text(const std::string& text) const {
  std::vector<int> out;
  for (const auto& tok : tokenize(text)) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode_tokens(std::span<const int> ids) const {
  std::string out;
  for (int t : ids) {
    if (t < kNumReserved || t >= size()) continue;
    if (!out.empty()) out += ' ';
    out += tokens[static_cast<std::size_t>(t)];
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  std::set<std::string> words;
  for (const auto& text : texts) {
    for (const auto& tok : tokenize(text)) words.insert(tok);
  }
  std::vector<std::string> tokens;
  for (const char* r : kReservedTokens) tokens.emplace_back(r);
  tokens.insert(tokens.end(), words.begin(), words.end());
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary vocab;
  vocab.tokens = std::move(tokens);
  for (int i = 0; i < vocab.size(); ++i) {
    vocab.index[vocab.tokens[static_cast<std::size_t>(i)]] = i;
  }
  return vocab;
}

Vocabulary Vocabulary::build_from_corpus(const Corpus& corpus) {
  std::vector<std::string> texts;
  for (const auto& d : corpus.dialogs) {
    for (const auto& t : d.turns) texts.push_back(t.text);
  }
  for (const auto& s : corpus.ontology.slots) {
    texts.push_back(s.name);
    for (const auto& v : s.values) texts.push_back(v);
  }
  texts.emplace_back("none ; = : user system state");
  return build(texts);
}

Matrix positional_encoding(int max_len, int d_model) {
  Matrix pe(max_len, d_model);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle =
          pos / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < d_model) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

void ModelParams::init(std::uint64_t seed) {
  const int d = config.d_model;
  const int dff = d * config.ff_mult;
  const int v = vocab.size();
  if (d % config.heads != 0) {
    throw ValidationError("d_model must be divisible by heads");
  }
  std::mt19937_64 rng(seed);
  // Fan-in scaled init; token embeddings at unit scale so they are not
  // drowned out by the unit-amplitude positional encoding.
  auto randm_sigma = [&](int r, int c, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
    }
    return m;
  };
  auto randm = [&](int r, int c) {
    return randm_sigma(r, c, 1.0 / std::sqrt(static_cast<double>(r)));
  };
  tensors.clear();
  tensors["embedding"] = randm_sigma(v, d, 1.0);
  auto add_ln = [&](const std::string& prefix) {
    tensors[prefix + ".g"] = Matrix::Ones(1, d);
    tensors[prefix + ".b"] = Matrix::Zero(1, d);
  };
  // Self-attention gets a learned per-head bias over clipped relative
  // offsets so "look n tokens back" is directly expressible; cross-attention
  // relates two different sequences, where relative offsets carry no signal.
  auto add_attn = [&](const std::string& prefix, bool relative) {
    tensors[prefix + ".wq"] = randm(d, d);
    tensors[prefix + ".wk"] = randm(d, d);
    tensors[prefix + ".wv"] = randm(d, d);
    tensors[prefix + ".wo"] = randm(d, d);
    if (relative) {
      tensors[prefix + ".rel"] =
          Matrix::Zero(2 * kRelClip + 1, config.heads);
    }
  };
  auto add_ff = [&](const std::string& prefix) {
    tensors[prefix + ".w1"] = randm(d, dff);
    tensors[prefix + ".b1"] = Matrix::Zero(1, dff);
    tensors[prefix + ".w2"] = randm(dff, d);
    tensors[prefix + ".b2"] = Matrix::Zero(1, d);
  };
  for (int l = 0; l < config.enc_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    add_attn(p + ".attn", true);
    add_ff(p + ".ff");
    add_ln(p + ".ln1");
    add_ln(p + ".ln2");
  }
  add_ln("enc.ln");
  for (int l = 0; l < config.dec_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    add_attn(p + ".self", true);
    add_attn(p + ".cross", false);
    add_ff(p + ".ff");
    add_ln(p + ".ln1");
    add_ln(p + ".ln2");
    add_ln(p + ".ln3");
  }
  add_ln("dec.ln");
  tensors["out_bias"] = Matrix::Zero(1, v);
  tensors["seg"] = Matrix::Zero(1, d);  // knowledge-region marker, see embed()
  if (config.separate_retrieval_head) {
    tensors["ret.w1"] = randm(d, d);
    tensors["ret.b1"] = Matrix::Zero(1, d);
    tensors["ret.w2"] = randm(d, d);
    tensors["ret.b2"] = Matrix::Zero(1, d);
  }
}

bool ModelParams::all_finite() const {
  for (const auto& [name, m] : tensors) {
    if (!m.allFinite()) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  for (const auto& [name, m] : params.tensors) {
    g.by_name[name] = Matrix::Zero(m.rows(), m.cols());
  }
  return g;
}

void Gradients::zero() {
  for (auto& [name, m] : by_name) m.setZero();
}

ModelGraph::ModelGraph(const ModelParams& params, Gradients* grads)
    : params_(params), tape_(grads != nullptr), grads_(grads) {}

Tape::ValueRef ModelGraph::p(const std::string& name) {
  auto it = leaf_cache_.find(name);
  if (it != leaf_cache_.end()) return it->second;
  Matrix* sink = grads_ != nullptr ? &grads_->at(name) : nullptr;
  Tape::ValueRef ref = tape_.param(params_.tensors.at(name), sink, "param");
  leaf_cache_.emplace(name, ref);
  return ref;
}

Tape::ValueRef ModelGraph::embed(std::span<const int> tokens) {
  std::vector<int> idx(tokens.begin(), tokens.end());
  Tape::ValueRef emb = tape_.rows(p("embedding"), idx);
  const int len = static_cast<int>(tokens.size());
  Matrix pe = positional_encoding(
      std::max(len, 1), params_.config.d_model).topRows(len);
  Tape::ValueRef x = tape_.add(emb, tape_.input(std::move(pe), "pos_enc"));
  // Learned knowledge-region marker. Integrated inputs are BOS + elements
  // (each closed by <k>) + dialog turns, so the region ends at the last <k>.
  // Slot and value tokens recur in both regions; the marker lets attention
  // tell the knowledge copy from a conversational mention.
  auto last_sep = std::find(idx.rbegin(), idx.rend(), Vocabulary::kKnowSep);
  if (last_sep != idx.rend()) {
    const Eigen::Index end = std::distance(last_sep, idx.rend());
    Matrix in_region = Matrix::Zero(len, 1);
    in_region.topRows(end).setOnes();
    for (Eigen::Index i = 0; i < end; ++i) {
      if (idx[static_cast<std::size_t>(i)] == Vocabulary::kBos) {
        in_region(i, 0) = 0.0;
      }
    }
    x = tape_.add(x, tape_.matmul(tape_.input(std::move(in_region), "seg_mask"),
                                  p("seg")));
  }
  return x;
}

Tape::ValueRef ModelGraph::attention(Tape::ValueRef q_in, Tape::ValueRef kv_in,
                                     const std::string& prefix,
                                     const Matrix* mask) {
  const int d = params_.config.d_model;
  const int heads = params_.config.heads;
  const int dh = d / heads;
  Tape::ValueRef q = tape_.matmul(q_in, p(prefix + ".wq"));
  Tape::ValueRef k = tape_.matmul(kv_in, p(prefix + ".wk"));
  Tape::ValueRef v = tape_.matmul(kv_in, p(prefix + ".wv"));
  Tape::ValueRef mask_ref{};
  if (mask != nullptr) mask_ref = tape_.input(*mask, "attn_mask");
  // Gathered relative-offset bias table, (nq*nk) x heads in the column-major
  // layout of the score matrices; one column slice + reshape per head below.
  Tape::ValueRef rel_flat{};
  const Eigen::Index nq = tape_.value(q).rows();
  const Eigen::Index nk = tape_.value(k).rows();
  if (params_.tensors.count(prefix + ".rel") != 0) {
    std::vector<int> idx(static_cast<std::size_t>(nq * nk));
    for (Eigen::Index j = 0; j < nk; ++j) {
      for (Eigen::Index i = 0; i < nq; ++i) {
        const int off = std::clamp<int>(static_cast<int>(i - j),
                                        -kRelClip, kRelClip);
        idx[static_cast<std::size_t>(j * nq + i)] = off + kRelClip;
      }
    }
    rel_flat = tape_.rows(p(prefix + ".rel"), std::move(idx));
  }
  std::vector<Tape::ValueRef> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tape::ValueRef qh = tape_.slice_cols(q, h * dh, dh);
    Tape::ValueRef kh = tape_.slice_cols(k, h * dh, dh);
    Tape::ValueRef vh = tape_.slice_cols(v, h * dh, dh);
    Tape::ValueRef scores =
        tape_.scale(tape_.matmul_nt(qh, kh), 1.0 / std::sqrt(dh));
    if (rel_flat.valid()) {
      scores = tape_.add(scores,
                         tape_.reshape(tape_.slice_cols(rel_flat, h, 1),
                                       static_cast<int>(nq),
                                       static_cast<int>(nk)));
    }
    if (mask_ref.valid()) scores = tape_.add(scores, mask_ref);
    head_outs.push_back(tape_.matmul(tape_.softmax_rows(scores), vh));
  }
  return tape_.matmul(tape_.concat_cols(head_outs), p(prefix + ".wo"));
}

Tape::ValueRef ModelGraph::ff(Tape::ValueRef x, const std::string& prefix) {
  Tape::ValueRef h = tape_.gelu(tape_.add_row_broadcast(
      tape_.matmul(x, p(prefix + ".w1")), p(prefix + ".b1")));
  return tape_.add_row_broadcast(tape_.matmul(h, p(prefix + ".w2")),
                                 p(prefix + ".b2"));
}

EncodedSequence ModelGraph::encode(std::span<const int> tokens) {
  if (tokens.empty() || tokens[0] != Vocabulary::kBos) {
    throw ValidationError("encode: sequence must begin with BOS");
  }
  if (static_cast<int>(tokens.size()) > params_.config.max_enc_len) {
    throw ValidationError("encode: sequence of " +
                          std::to_string(tokens.size()) +
                          " tokens exceeds max encoder length " +
                          std::to_string(params_.config.max_enc_len));
  }
  const int len = static_cast<int>(tokens.size());
  // Key-side mask: PAD positions never attended to.
  Matrix* mask_ptr = nullptr;
  Matrix mask;
  if (std::find(tokens.begin(), tokens.end(), Vocabulary::kPad) != tokens.end()) {
    mask = Matrix::Zero(len, len);
    for (int j = 0; j < len; ++j) {
      if (tokens[static_cast<std::size_t>(j)] == Vocabulary::kPad) {
        mask.col(j).setConstant(kMaskNegInf);
      }
    }
    mask_ptr = &mask;
  }
  Tape::ValueRef x = embed(tokens);
  for (int l = 0; l < params_.config.enc_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l);
    Tape::ValueRef normed = tape_.layer_norm_rows(x, p(pre + ".ln1.g"),
                                                  p(pre + ".ln1.b"));
    x = tape_.add(x, attention(normed, normed, pre + ".attn", mask_ptr));
    Tape::ValueRef normed2 = tape_.layer_norm_rows(x, p(pre + ".ln2.g"),
                                                   p(pre + ".ln2.b"));
    x = tape_.add(x, ff(normed2, pre + ".ff"));
  }
  x = tape_.layer_norm_rows(x, p("enc.ln.g"), p("enc.ln.b"));
  EncodedSequence out;
  out.seq = x;
  out.first = tape_.rows(x, {0});
  return out;
}

Tape::ValueRef ModelGraph::decoder_logits(const EncodedSequence& encoded,
                                          std::span<const int> dec_input) {
  const int len = static_cast<int>(dec_input.size());
  Matrix causal = Matrix::Zero(len, len);
  for (int i = 0; i < len; ++i) {
    for (int j = i + 1; j < len; ++j) causal(i, j) = kMaskNegInf;
  }
  Tape::ValueRef x = embed(dec_input);
  for (int l = 0; l < params_.config.dec_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l);
    Tape::ValueRef n1 =
        tape_.layer_norm_rows(x, p(pre + ".ln1.g"), p(pre + ".ln1.b"));
    x = tape_.add(x, attention(n1, n1, pre + ".self", &causal));
    Tape::ValueRef n2 =
        tape_.layer_norm_rows(x, p(pre + ".ln2.g"), p(pre + ".ln2.b"));
    x = tape_.add(x, attention(n2, encoded.seq, pre + ".cross", nullptr));
    Tape::ValueRef n3 =
        tape_.layer_norm_rows(x, p(pre + ".ln3.g"), p(pre + ".ln3.b"));
    x = tape_.add(x, ff(n3, pre + ".ff"));
  }
  x = tape_.layer_norm_rows(x, p("dec.ln.g"), p("dec.ln.b"));
  // Output projection is tied to the input embedding table: a residual
  // stream carrying a token's embedding maps straight onto that token's
  // logit, which is what lets the decoder copy tokens out of the input.
  return tape_.add_row_broadcast(tape_.matmul_nt(x, p("embedding")),
                                 p("out_bias"));
}

Tape::ValueRef ModelGraph::decode_loss(const EncodedSequence& encoded,
                                       std::span<const int> target) {
  if (target.empty()) {
    throw ValidationError("decode_loss: empty target");
  }
  if (target.back() != Vocabulary::kEos) {
    throw ValidationError("decode_loss: target must end with EOS");
  }
  std::vector<int> dec_input;
  dec_input.reserve(target.size());
  dec_input.push_back(Vocabulary::kBos);
  dec_input.insert(dec_input.end(), target.begin(), target.end() - 1);
  Tape::ValueRef logits = decoder_logits(encoded, dec_input);
  return tape_.cross_entropy_mean(logits,
                                  std::vector<int>(target.begin(), target.end()));
}

std::vector<int> ModelGraph::generate(const EncodedSequence& encoded,
                                      int max_len) {
  if (max_len < 1) {
    throw ValidationError("generate: max_len must be >= 1");
  }
  std::vector<int> dec_input{Vocabulary::kBos};
  std::vector<int> out;
  for (int step = 0; step < max_len; ++step) {
    Tape::ValueRef logits = decoder_logits(encoded, dec_input);
    const Matrix& z = tape_.value(logits);
    int best = 0;
    z.row(z.rows() - 1).maxCoeff(&best);
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    dec_input.push_back(best);
  }
  return out;
}

Tape::ValueRef ModelGraph::retrieval_rep(Tape::ValueRef first,
                                         bool detach_encoder) {
  if (!params_.config.separate_retrieval_head) return first;
  Tape::ValueRef x = detach_encoder ? tape_.detach(first) : first;
  Tape::ValueRef h = tape_.gelu(tape_.add_row_broadcast(
      tape_.matmul(x, p("ret.w1")), p("ret.b1")));
  return tape_.add_row_broadcast(tape_.matmul(h, p("ret.w2")), p("ret.b2"));
}

std::vector<int> build_dialog_context(const Dialog& dialog,
                                      std::size_t user_turn,
                                      const Vocabulary& vocab,
                                      int max_ctx_len) {
  std::vector<std::vector<int>> turn_tokens;
  std::size_t users_seen = 0;
  for (const auto& turn : dialog.turns) {
    const bool is_user = turn.speaker == Speaker::kUser;
    std::vector<int> toks;
    toks.push_back(is_user ? Vocabulary::kUserSep : Vocabulary::kSystemSep);
    for (int t : vocab.encode_text(turn.text)) toks.push_back(t);
    turn_tokens.push_back(std::move(toks));
    if (is_user) {
      if (users_seen == user_turn) break;
      ++users_seen;
    }
  }
  std::size_t total = 0;
  for (const auto& t : turn_tokens) total += t.size();
  std::size_t start = 0;
  while (start + 1 < turn_tokens.size() &&
         total > static_cast<std::size_t>(max_ctx_len)) {
    total -= turn_tokens[start].size();
    ++start;
  }
  std::vector<int> out;
  out.reserve(total);
  for (std::size_t i = start; i < turn_tokens.size(); ++i) {
    out.insert(out.end(), turn_tokens[i].begin(), turn_tokens[i].end());
  }
  // A single over-long turn still has to fit.
  if (out.size() > static_cast<std::size_t>(max_ctx_len)) {
    out.erase(out.begin(),
              out.end() - static_cast<std::ptrdiff_t>(max_ctx_len));
  }
  return out;
}

std::vector<int> with_bos(std::span<const int> tokens) {
  std::vector<int> out;
  out.reserve(tokens.size() + 1);
  out.push_back(Vocabulary::kBos);
  out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState s;
  for (const auto& [name, m] : params.tensors) {
    s.m[name] = Matrix::Zero(m.rows(), m.cols());
    s.v[name] = Matrix::Zero(m.rows(), m.cols());
  }
  return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config) {
  for (const auto& [name, g] : grads.by_name) {
    if (!g.allFinite()) {
      throw NumericError("adam_step: non-finite gradient for " + name);
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (auto& [name, w] : params.tensors) {
    const Matrix& g = grads.at(name);
    Matrix& m = state.m.at(name);
    Matrix& v = state.v.at(name);
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = m / bc1;
    const Matrix v_hat = v / bc2;
    w.array() -= config.lr * m_hat.array() /
                 (v_hat.array().sqrt() + config.eps);
    if (!w.allFinite()) {
      throw NumericError("adam_step: non-finite parameter " + name);
    }
  }
}

void sgd_step(ModelParams& params, const Gradients& grads, double lr) {
  for (auto& [name, w] : params.tensors) {
    const Matrix& g = grads.at(name);
    if (!g.allFinite()) {
      throw NumericError("sgd_step: non-finite gradient for " + name);
    }
    w -= lr * g;
  }
}

}  // namespace kgdst
