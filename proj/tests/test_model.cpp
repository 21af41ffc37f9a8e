#include <cmath>
#include <random>

#include "doctest.h"
#include "kgdst/model.hpp"

using namespace kgdst;

namespace {

Vocabulary tiny_vocab() {
  return Vocabulary::build({"a b c d e f g h"});
}

ModelParams tiny_model(std::uint64_t seed, int d = 16, int layers = 1) {
  ModelParams p;
  p.config.d_model = d;
  p.config.heads = 2;
  p.config.enc_layers = layers;
  p.config.dec_layers = layers;
  p.config.max_enc_len = 64;
  p.config.max_dec_len = 32;
  p.vocab = tiny_vocab();
  p.init(seed);
  return p;
}

}  // namespace

TEST_CASE("tokenizer splits punctuation but keeps hyphens") {
  auto toks = tokenize("hotel-parking: don't care ; x=1.");
  CHECK(toks == std::vector<std::string>{"hotel-parking", ":", "don't", "care",
                                         ";", "x", "=", "1", "."});
}

TEST_CASE("vocabulary round-trips known tokens, UNK for unknown") {
  Vocabulary v = tiny_vocab();
  CHECK(v.id("a") >= Vocabulary::kNumReserved);
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  auto ids = v.encode_text("b a c");
  CHECK(v.decode_tokens(ids) == "b a c");
}

TEST_CASE("encode is deterministic with the right shape") {
  ModelParams p = tiny_model(3);
  std::vector<int> toks = with_bos(p.vocab.encode_text("a b c"));
  ModelGraph g1(p, nullptr), g2(p, nullptr);
  EncodedSequence e1 = g1.encode(toks);
  EncodedSequence e2 = g2.encode(toks);
  CHECK(g1.tape().value(e1.seq).rows() == 4);
  CHECK(g1.tape().value(e1.seq).cols() == 16);
  CHECK((g1.tape().value(e1.seq) - g2.tape().value(e2.seq))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("encode rejects missing BOS and over-length input") {
  ModelParams p = tiny_model(4);
  CHECK_THROWS_AS(ModelGraph(p, nullptr).encode(p.vocab.encode_text("a b")),
                  ValidationError);
  std::vector<int> over(100, p.vocab.id("a"));
  over[0] = Vocabulary::kBos;
  CHECK_THROWS_AS(ModelGraph(p, nullptr).encode(over), ValidationError);
}

TEST_CASE("permuting non-BOS tokens changes the first-token vector") {
  ModelParams p = tiny_model(5, 16, 2);
  std::vector<int> a = with_bos(p.vocab.encode_text("a b c d"));
  std::vector<int> b = a;
  std::swap(b[1], b[3]);
  ModelGraph ga(p, nullptr), gb(p, nullptr);
  Matrix va = ga.tape().value(ga.encode(a).first);
  Matrix vb = gb.tape().value(gb.encode(b).first);
  CHECK((va - vb).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("PAD positions do not influence earlier tokens") {
  ModelParams p = tiny_model(6);
  std::vector<int> base = with_bos(p.vocab.encode_text("a b c"));
  std::vector<int> padded = base;
  padded.insert(padded.end(), 3, Vocabulary::kPad);
  ModelGraph ga(p, nullptr), gb(p, nullptr);
  Matrix va = ga.tape().value(ga.encode(base).seq);
  Matrix vb = gb.tape().value(gb.encode(padded).seq);
  CHECK((va - vb.topRows(va.rows())).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("uniform output distribution gives ln|V| loss") {
  ModelParams p = tiny_model(7);
  p.tensors["embedding"].setZero();  // logits are tied to the embedding
  p.tensors["out_bias"].setZero();
  std::vector<int> target = p.vocab.encode_text("a b");
  target.push_back(Vocabulary::kEos);
  ModelGraph g(p, nullptr);
  EncodedSequence enc = g.encode(with_bos(p.vocab.encode_text("c")));
  Tape::ValueRef loss = g.decode_loss(enc, target);
  CHECK(g.tape().scalar(loss) ==
        doctest::Approx(std::log(p.vocab.size())).epsilon(1e-12));
}

TEST_CASE("decode_loss validates its target") {
  ModelParams p = tiny_model(8);
  ModelGraph g(p, nullptr);
  EncodedSequence enc = g.encode(with_bos(p.vocab.encode_text("a")));
  CHECK_THROWS_AS(g.decode_loss(enc, std::vector<int>{}), ValidationError);
  CHECK_THROWS_AS(g.decode_loss(enc, std::vector<int>{p.vocab.id("a")}),
                  ValidationError);
}

TEST_CASE("loss is sensitive to target order") {
  ModelParams p = tiny_model(9);
  std::vector<int> t1 = {p.vocab.id("a"), p.vocab.id("b"), Vocabulary::kEos};
  std::vector<int> t2 = {p.vocab.id("b"), p.vocab.id("a"), Vocabulary::kEos};
  ModelGraph g(p, nullptr);
  EncodedSequence enc = g.encode(with_bos(p.vocab.encode_text("c d")));
  CHECK(g.tape().scalar(g.decode_loss(enc, t1)) !=
        g.tape().scalar(g.decode_loss(enc, t2)));
}

TEST_CASE("overfitting one example reproduces its target") {
  ModelParams p = tiny_model(10);
  const std::vector<int> input = with_bos(p.vocab.encode_text("a b c"));
  std::vector<int> target = p.vocab.encode_text("d e f");
  target.push_back(Vocabulary::kEos);

  AdamState adam = AdamState::zeros_like(p);
  AdamConfig cfg;
  cfg.lr = 1e-2;
  double first_loss = 0.0, last_loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    Gradients grads = Gradients::zeros_like(p);
    ModelGraph g(p, &grads);
    Tape::ValueRef loss = g.decode_loss(g.encode(input), target);
    last_loss = g.tape().scalar(loss);
    if (step == 0) first_loss = last_loss;
    g.backward(loss);
    adam_step(p, grads, adam, cfg);
  }
  CHECK(last_loss < first_loss);
  CHECK(last_loss < 0.1);
  CHECK(p.all_finite());

  ModelGraph g(p, nullptr);
  std::vector<int> out = g.generate(g.encode(input), 16);
  std::vector<int> expected(target.begin(), target.end() - 1);
  CHECK(out == expected);

  SUBCASE("generation is deterministic") {
    ModelGraph g2(p, nullptr);
    CHECK(g2.generate(g2.encode(input), 16) == out);
  }
  SUBCASE("max_len 1 gives a single token") {
    ModelGraph g3(p, nullptr);
    CHECK(g3.generate(g3.encode(input), 1).size() <= 1);
  }
}

TEST_CASE("sgd step with lr=1 subtracts the gradient") {
  ModelParams p = tiny_model(11);
  ModelParams before = p;
  Gradients grads = Gradients::zeros_like(p);
  grads.at("out_bias").setConstant(0.25);
  sgd_step(p, grads, 1.0);
  CHECK((p.tensors["out_bias"] -
         (before.tensors["out_bias"].array() - 0.25).matrix())
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(p.tensors["embedding"] == before.tensors["embedding"]);
}

TEST_CASE("adam with zero gradient leaves params unchanged") {
  ModelParams p = tiny_model(12);
  ModelParams before = p;
  AdamState adam = AdamState::zeros_like(p);
  adam_step(p, Gradients::zeros_like(p), adam, AdamConfig{});
  for (const auto& [name, m] : p.tensors) {
    CHECK(m == before.tensors.at(name));
  }
}

TEST_CASE("adam converges on a scalar quadratic") {
  // f(w) = w^2 from w = 1.
  Matrix w = Matrix::Constant(1, 1, 1.0);
  Matrix m = Matrix::Zero(1, 1), v = Matrix::Zero(1, 1);
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 500; ++t) {
    const double g = 2.0 * w(0, 0);
    m(0, 0) = b1 * m(0, 0) + (1 - b1) * g;
    v(0, 0) = b2 * v(0, 0) + (1 - b2) * g * g;
    const double mh = m(0, 0) / (1 - std::pow(b1, t));
    const double vh = v(0, 0) / (1 - std::pow(b2, t));
    w(0, 0) -= lr * mh / (std::sqrt(vh) + eps);
  }
  CHECK(w(0, 0) * w(0, 0) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients") {
  ModelParams p = tiny_model(13);
  AdamState adam = AdamState::zeros_like(p);
  Gradients grads = Gradients::zeros_like(p);
  grads.at("embedding")(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(p, grads, adam, AdamConfig{}), NumericError);
}

TEST_CASE("a single parameter set serves retrieval and generation") {
  // No knowledge-specific encoder exists: every tensor belongs to the one
  // shared encoder/decoder stack (plus the optional retrieval head).
  ModelParams p = tiny_model(14);
  for (const auto& [name, m] : p.tensors) {
    const bool known = name == "embedding" || name == "out_bias" ||
                       name == "seg" || name.starts_with("enc") ||
                       name.starts_with("dec") || name.starts_with("ret.");
    CHECK(known);
  }
}

TEST_CASE("relative attention bias: self-attention only, and it matters") {
  ModelParams p = tiny_model(15, 16, 2);
  CHECK(p.tensors.count("enc0.attn.rel") == 1);
  CHECK(p.tensors.count("dec0.self.rel") == 1);
  CHECK(p.tensors.count("dec0.cross.rel") == 0);
  CHECK(p.tensors.at("enc0.attn.rel").cols() == p.config.heads);

  std::vector<int> toks = with_bos(p.vocab.encode_text("a b c d"));
  ModelGraph g0(p, nullptr);
  Matrix before = g0.tape().value(g0.encode(toks).seq);
  p.tensors["enc0.attn.rel"].setConstant(1.5);
  ModelGraph g1(p, nullptr);
  Matrix after = g1.tape().value(g1.encode(toks).seq);
  // A uniform bias cancels inside softmax only when all offsets share a
  // bucket; across distinct buckets the table shifts the encoding.
  // Middle row = offset -1 (tables cover clipped offsets, most negative
  // first), present in any multi-token sequence.
  const Eigen::Index mid = p.tensors["enc0.attn.rel"].rows() / 2;
  p.tensors["enc0.attn.rel"].row(mid - 1).setConstant(-2.0);
  ModelGraph g2(p, nullptr);
  Matrix shifted = g2.tape().value(g2.encode(toks).seq);
  CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((before - shifted).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("knowledge-region marker applies up to the last <k> separator") {
  ModelParams p = tiny_model(16);
  std::vector<int> plain = with_bos(p.vocab.encode_text("a b c d"));
  std::vector<int> marked = plain;
  marked.insert(marked.begin() + 3, Vocabulary::kKnowSep);

  ModelGraph g0(p, nullptr);
  Matrix plain_before = g0.tape().value(g0.encode(plain).seq);
  ModelGraph g1(p, nullptr);
  Matrix marked_before = g1.tape().value(g1.encode(marked).seq);
  // A uniform marker would sit in layer norm's null space; vary it.
  p.tensors["seg"](0, 0) = 0.7;
  ModelGraph g2(p, nullptr);
  Matrix plain_after = g2.tape().value(g2.encode(plain).seq);
  ModelGraph g3(p, nullptr);
  Matrix marked_after = g3.tape().value(g3.encode(marked).seq);

  // No separator anywhere: the marker must not leak in.
  CHECK((plain_before - plain_after).cwiseAbs().maxCoeff() == 0.0);
  // With a separator the encoding shifts.
  CHECK((marked_before - marked_after).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("dialog context truncates oldest turns first") {
  Corpus c;
  c.ontology.slots = {{"a-x", {"p"}}};
  Dialog d;
  d.id = "d";
  d.turns = {{Speaker::kUser, "one two three"},
             {Speaker::kSystem, "four five"},
             {Speaker::kUser, "six seven"}};
  DialogState s;
  d.states = {s, s};
  Vocabulary v = Vocabulary::build({"one two three four five six seven"});
  std::vector<int> full = build_dialog_context(d, 1, v, 100);
  CHECK(full.size() == 10);  // 3 separators + 7 words
  std::vector<int> cut = build_dialog_context(d, 1, v, 7);
  // Whole oldest turn (4 tokens) dropped; remaining turns intact.
  CHECK(cut.size() == 6);
  CHECK(cut[0] == Vocabulary::kSystemSep);
  // The truncated context is a suffix of the full rendering.
  CHECK(std::equal(cut.rbegin(), cut.rend(), full.rbegin()));
}
