#include <random>

#include "doctest.h"
#include "kgdst/knowledge.hpp"

using namespace kgdst;

namespace {

Ontology two_slot_ontology() {
  Ontology o;
  o.domains = {"hotel"};
  o.slots = {{"hotel-area", {"west", "east", "north"}},
             {"hotel-parking", {"yes", "no"}}};
  return o;
}

}  // namespace

TEST_CASE("type kb has one element per slot") {
  KnowledgeBase kb = build_type_kb(two_slot_ontology());
  REQUIRE(kb.size() == 2);
  CHECK(kb.kind == KnowledgeKind::kType);
  CHECK(kb.elements[0].text == "hotel-area");
  CHECK(kb.elements[1].text == "hotel-parking");
  CHECK(kb.elements[0].id == 0);
  CHECK(kb.elements[1].id == 1);
  CHECK(kb.top_k == 2);  // capped at kb size
}

TEST_CASE("type-value kb enumerates every pair") {
  KnowledgeBase kb = build_type_value_kb(two_slot_ontology());
  REQUIRE(kb.size() == 5);
  CHECK(kb.kind == KnowledgeKind::kTypeValue);
  CHECK(kb.elements[0].text == "hotel-area: west");
  CHECK(kb.elements[4].text == "hotel-parking: no");
  CHECK(kb.top_k == 5);
  // Texts are pairwise distinct.
  std::set<std::string> texts;
  for (const auto& e : kb.elements) texts.insert(e.text);
  CHECK(texts.size() == 5);
}

TEST_CASE("top_k defaults saturate at 10 and 30") {
  Ontology o;
  for (int d = 0; d < 4; ++d) {
    for (int s = 0; s < 5; ++s) {
      SlotSpec spec;
      spec.name = "d" + std::to_string(d) + "-s" + std::to_string(s);
      for (int v = 0; v < 6; ++v) spec.values.push_back("v" + std::to_string(v));
      o.slots.push_back(spec);
    }
    o.domains.push_back("d" + std::to_string(d));
  }
  CHECK(build_type_kb(o).top_k == 10);        // 20 slots
  CHECK(build_type_value_kb(o).top_k == 30);  // 120 pairs
}

TEST_CASE("gold labels match direct membership") {
  Ontology o = two_slot_ontology();
  DialogState s;
  s.insert({"hotel-area", "east"});

  KnowledgeBase types = build_type_kb(o);
  CHECK(gold_labels(s, types) == std::vector<int>{1, 0});

  KnowledgeBase pairs = build_type_value_kb(o);
  std::vector<int> labels = gold_labels(s, pairs);
  REQUIRE(labels.size() == 5);
  for (int i = 0; i < 5; ++i) {
    const bool expected = s.contains(pairs.elements[i].pair);
    CHECK(labels[i] == (expected ? 1 : 0));
  }
  CHECK(std::count(labels.begin(), labels.end(), 1) == 1);
}

TEST_CASE("gold labels reject training kbs") {
  SyntheticSpec spec;
  spec.num_dialogs = 5;
  Corpus c = generate_synthetic(spec);
  KnowledgeBase kb = build_training_kb(c.dialogs, 5, 1);
  CHECK_THROWS_AS(gold_labels(DialogState{}, kb), ValidationError);
}

TEST_CASE("slot-set f1 matches a brute-force oracle") {
  CHECK(slot_set_f1({}, {}) == 1.0);
  CHECK(slot_set_f1({"a"}, {}) == 0.0);
  CHECK(slot_set_f1({"a", "b"}, {"b", "c"}) == doctest::Approx(0.5));

  std::mt19937_64 rng(3);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f"};
  auto random_set = [&] {
    std::set<std::string> s;
    for (const auto& name : pool) {
      if (rng() % 2 == 0) s.insert(name);
    }
    return s;
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::set<std::string> a = random_set(), b = random_set();
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    double expected;
    if (a.empty() && b.empty()) {
      expected = 1.0;
    } else if (inter == 0) {
      expected = 0.0;
    } else {
      const double p = double(inter) / b.size();
      const double r = double(inter) / a.size();
      expected = 2 * p * r / (p + r);
    }
    CHECK(slot_set_f1(a, b) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("training kb samples without replacement, deterministically") {
  SyntheticSpec spec;
  spec.num_dialogs = 20;
  Corpus c = generate_synthetic(spec);
  KnowledgeBase a = build_training_kb(c.dialogs, 15, 9);
  KnowledgeBase b = build_training_kb(c.dialogs, 15, 9);
  REQUIRE(a.size() == 15);
  CHECK(a.kind == KnowledgeKind::kTrainingExample);
  CHECK(a.top_k == 1);
  CHECK(knowledge_base_to_json(a) == knowledge_base_to_json(b));
  std::set<std::string> texts;
  for (const auto& e : a.elements) {
    CHECK(e.text.find(" state : ") != std::string::npos);
    texts.insert(e.text);
  }
  CHECK(texts.size() == 15);  // no repeats

  CHECK_THROWS_AS(build_training_kb(c.dialogs, 100000, 0), ValidationError);
}

TEST_CASE("gold training example maximizes slot-set f1, ties to lowest id") {
  SyntheticSpec spec;
  spec.num_dialogs = 10;
  Corpus c = generate_synthetic(spec);
  KnowledgeBase kb = build_training_kb(c.dialogs, 10, 2);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    DialogState s;
    for (const auto& slot : c.ontology.slots) {
      if (rng() % 3 == 0) s.insert({slot.name, slot.values[0]});
    }
    const int got = gold_training_example(s, kb);
    const std::vector<std::string> names = s.slot_names();
    std::set<std::string> query(names.begin(), names.end());
    int best = -1;
    double best_f1 = -1.0;
    for (const auto& e : kb.elements) {
      const double f1 = slot_set_f1(query, e.example_slots);
      if (f1 > best_f1) {
        best_f1 = f1;
        best = e.id;
      }
    }
    CHECK(got == best);
  }
}

TEST_CASE("context rendering includes role markers and all prior turns") {
  SyntheticSpec spec;
  spec.num_dialogs = 1;
  spec.min_user_turns = 2;
  spec.max_user_turns = 2;
  Corpus c = generate_synthetic(spec);
  const Dialog& d = c.dialogs[0];
  const std::string t0 = render_context_text(d, 0);
  const std::string t1 = render_context_text(d, 1);
  CHECK(t0.starts_with("user:"));
  CHECK(t1.find("system:") != std::string::npos);
  CHECK(t1.starts_with(t0));  // prefix property
  CHECK(t1.size() > t0.size());
}

TEST_CASE("knowledge base json round-trip") {
  KnowledgeBase kb = build_type_value_kb(two_slot_ontology());
  KnowledgeBase loaded = knowledge_base_from_json(knowledge_base_to_json(kb));
  CHECK(knowledge_base_to_json(loaded) == knowledge_base_to_json(kb));
  CHECK(loaded.elements[3].pair == SlotValue{"hotel-parking", "yes"});

  SyntheticSpec spec;
  spec.num_dialogs = 5;
  Corpus c = generate_synthetic(spec);
  KnowledgeBase tkb = build_training_kb(c.dialogs, 4, 0);
  KnowledgeBase tloaded = knowledge_base_from_json(knowledge_base_to_json(tkb));
  CHECK(knowledge_base_to_json(tloaded) == knowledge_base_to_json(tkb));
  CHECK(tloaded.elements[0].example_slots == tkb.elements[0].example_slots);
}

TEST_CASE("malformed knowledge json is rejected") {
  CHECK_THROWS_AS(knowledge_base_from_json("{"), FormatError);
  CHECK_THROWS_AS(knowledge_base_from_json(R"({"kind":"bogus","top_k":1,"elements":[]})"),
                  FormatError);
}
