#include <filesystem>

#include "doctest.h"
#include "kgdst/training.hpp"

#include "json.hpp"

using namespace kgdst;
using nlohmann::json;

namespace {

Corpus tiny_corpus() {
  SyntheticSpec spec;
  spec.num_dialogs = 8;
  spec.num_domains = 1;
  spec.slots_per_domain = 2;
  spec.values_per_slot = 2;
  spec.min_user_turns = 2;
  spec.max_user_turns = 2;
  return generate_synthetic(spec);
}

TrainConfig tiny_config(int steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 2;
  cfg.top_k = 2;
  cfg.lr = 1e-3;
  cfg.eval_every = 1000;  // skip periodic dev evals by default
  cfg.model.d_model = 16;
  cfg.model.heads = 2;
  cfg.model.enc_layers = 1;
  cfg.model.dec_layers = 1;
  cfg.model.max_enc_len = 128;
  cfg.model.max_ctx_len = 48;
  return cfg;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg = tiny_config(1);
  cfg.validate();
  TrainConfig bad = cfg;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.retrieval_weight = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("dev split takes the trailing fraction") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  CHECK(train.size() == 6);
  CHECK(dev.size() == 2);
  CHECK(train[0].id == c.dialogs[0].id);
  CHECK(dev[1].id == c.dialogs[7].id);
}

TEST_CASE("joint training is deterministic and logs a loss decomposition") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  KnowledgeBase kb = build_type_value_kb(c.ontology);
  TrainConfig cfg = tiny_config(4);

  TrainResult a = train_joint(train, dev, c.ontology, kb, cfg);
  TrainResult b = train_joint(train, dev, c.ontology, kb, cfg);
  CHECK(a.log_lines == b.log_lines);
  for (const auto& [name, m] : a.params.tensors) {
    CHECK(m == b.params.tensors.at(name));
  }

  int step_lines = 0;
  for (const auto& line : a.log_lines) {
    json j = json::parse(line);
    if (!j.contains("l_total")) continue;
    ++step_lines;
    const double total = j["l_total"].get<double>();
    const double parts = j["l_dst"].get<double>() * cfg.dst_weight +
                         j["l_ret"].get<double>() * cfg.retrieval_weight;
    CHECK(std::abs(total - parts) < 1e-10);
    CHECK(j["l_ret"].get<double>() > 0.0);
  }
  CHECK(step_lines == 4);
}

TEST_CASE("a short run reduces the training loss") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  KnowledgeBase kb = build_type_value_kb(c.ontology);
  TrainConfig cfg = tiny_config(30);
  cfg.lr = 3e-3;

  TrainResult r = train_joint(train, dev, c.ontology, kb, cfg);
  double first = -1, last = -1;
  for (const auto& line : r.log_lines) {
    json j = json::parse(line);
    if (!j.contains("l_total")) continue;
    if (first < 0) first = j["l_total"].get<double>();
    last = j["l_total"].get<double>();
  }
  CHECK(last < first);
  CHECK(r.params.all_finite());
}

TEST_CASE("zero retrieval weight leaves the retrieval loss out entirely") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  KnowledgeBase kb = build_type_value_kb(c.ontology);

  TrainConfig cfg = tiny_config(3);
  cfg.retrieval_weight = 0.0;
  TrainResult r = train_joint(train, dev, c.ontology, kb, cfg);
  for (const auto& line : r.log_lines) {
    json j = json::parse(line);
    if (j.contains("l_ret")) CHECK(j["l_ret"].get<double>() == 0.0);
  }
}

TEST_CASE("seq2seq baseline ignores knowledge") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  TrainConfig cfg = tiny_config(3);
  TrainResult r = seq2seq_baseline(train, dev, c.ontology, cfg);
  for (const auto& line : r.log_lines) {
    json j = json::parse(line);
    if (j.contains("l_ret")) CHECK(j["l_ret"].get<double>() == 0.0);
  }
  CHECK(r.params.all_finite());
}

TEST_CASE("sequential schedule marks the phase boundary") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  KnowledgeBase kb = build_type_value_kb(c.ontology);

  TrainConfig cfg = tiny_config(5);
  cfg.schedule = Schedule::kRetrievalThenDst;
  cfg.phase1_steps = 2;
  TrainResult r = train_sequential(train, dev, c.ontology, kb, cfg);

  int marker_step = -1;
  for (const auto& line : r.log_lines) {
    json j = json::parse(line);
    if (j.contains("phase") && j["phase"] == "dst") {
      marker_step = j["step"].get<int>();
    }
    // Logged steps are 1-based: retrieval phase covers steps 1..2, the
    // marker announces the DST phase starting at step 3.
    if (j.contains("l_total")) {
      const int step = j["step"].get<int>();
      if (step <= 2) CHECK(j["l_dst"].get<double>() == 0.0);
      if (step >= 3) CHECK(j["l_ret"].get<double>() == 0.0);
    }
  }
  CHECK(marker_step == 3);

  SUBCASE("joint schedule is rejected") {
    TrainConfig wrong = cfg;
    wrong.schedule = Schedule::kJoint;
    CHECK_THROWS_AS(train_sequential(train, dev, c.ontology, kb, wrong),
                    ValidationError);
  }
}

TEST_CASE("degenerate sequential run equals a DST-only run") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  KnowledgeBase kb = build_type_value_kb(c.ontology);

  // phase1_steps = 0 with integration off reduces to plain DST training.
  TrainConfig seq = tiny_config(3);
  seq.schedule = Schedule::kRetrievalThenDst;
  seq.phase1_steps = 0;
  seq.integration = TrainIntegration::kNone;
  TrainResult a = train_sequential(train, dev, c.ontology, kb, seq);

  TrainConfig bare = tiny_config(3);
  TrainResult b = seq2seq_baseline(train, dev, c.ontology, bare);

  for (const auto& [name, m] : a.params.tensors) {
    CHECK((m - b.params.tensors.at(name)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("separate retrieval head leaves shared init identical") {
  TrainConfig cfg = tiny_config(1);
  ModelConfig mc = cfg.model;
  ModelParams shared;
  shared.config = mc;
  shared.vocab = Vocabulary::build({"a b"});
  shared.init(3);

  ModelParams headed;
  mc.separate_retrieval_head = true;
  headed.config = mc;
  headed.vocab = shared.vocab;
  headed.init(3);

  bool has_head = false;
  for (const auto& [name, m] : headed.tensors) {
    if (name.starts_with("ret.")) {
      has_head = true;
      continue;
    }
    CHECK(m == shared.tensors.at(name));
  }
  CHECK(has_head);
}

TEST_CASE("checkpoint json round-trips exactly") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  KnowledgeBase kb = build_type_value_kb(c.ontology);
  TrainConfig cfg = tiny_config(2);
  TrainOutput out = train_with_checkpoint(train, dev, c.ontology, &kb, cfg);

  const std::string text = checkpoint_to_json(out.final_checkpoint);
  Checkpoint loaded = checkpoint_from_json(text);
  CHECK(checkpoint_to_json(loaded) == text);
  CHECK(loaded.step == 2);
  CHECK(loaded.rng_state == out.final_checkpoint.rng_state);
  for (const auto& [name, m] : out.final_checkpoint.params.tensors) {
    CHECK(m == loaded.params.tensors.at(name));
    CHECK(out.final_checkpoint.adam.m.at(name) == loaded.adam.m.at(name));
  }
  CHECK_THROWS_AS(checkpoint_from_json("{}"), FormatError);
}

TEST_CASE("resuming from a mid-run checkpoint matches the straight run") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  KnowledgeBase kb = build_type_value_kb(c.ontology);

  TrainConfig full = tiny_config(6);
  TrainOutput straight = train_with_checkpoint(train, dev, c.ontology, &kb, full);

  TrainConfig half = full;
  half.steps = 3;
  TrainOutput part1 = train_with_checkpoint(train, dev, c.ontology, &kb, half);
  Checkpoint mid =
      checkpoint_from_json(checkpoint_to_json(part1.final_checkpoint));
  TrainOutput part2 =
      train_with_checkpoint(train, dev, c.ontology, &kb, full, &mid);

  for (const auto& [name, m] : straight.final_checkpoint.params.tensors) {
    CHECK(m == part2.final_checkpoint.params.tensors.at(name));
  }
  CHECK(straight.final_checkpoint.rng_state ==
        part2.final_checkpoint.rng_state);
  // Resumed log covers steps 3..5 and matches the straight run's tail.
  const auto& tail = part2.result.log_lines;
  const auto& whole = straight.result.log_lines;
  REQUIRE(tail.size() <= whole.size());
  CHECK(std::equal(tail.rbegin(), tail.rend(), whole.rbegin()));
}

TEST_CASE("periodic dev evaluation tracks the best checkpoint") {
  Corpus c = tiny_corpus();
  auto [train, dev] = split_dev(c.dialogs, 0.25);
  KnowledgeBase kb = build_type_value_kb(c.ontology);
  TrainConfig cfg = tiny_config(4);
  cfg.eval_every = 2;
  TrainResult r = train_joint(train, dev, c.ontology, kb, cfg);

  int dev_lines = 0;
  for (const auto& line : r.log_lines) {
    json j = json::parse(line);
    if (j.contains("dev_jga")) {
      ++dev_lines;
      CHECK(j["dev_jga"].get<double>() >= 0.0);
      CHECK(j.contains("dev_precision"));
      CHECK(j.contains("dev_recall"));
    }
  }
  CHECK(dev_lines == 2);
  CHECK(r.best_step >= 0);
  CHECK(r.best_dev_jga >= 0.0);
  CHECK(r.best_params.all_finite());
}
