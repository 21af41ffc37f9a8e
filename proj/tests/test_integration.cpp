#include <algorithm>
#include <set>

#include "doctest.h"
#include "kgdst/integration.hpp"

using namespace kgdst;

namespace {

Ontology small_ontology() {
  Ontology o;
  o.domains = {"hotel"};
  o.slots = {{"hotel-area", {"west", "east"}},
             {"hotel-parking", {"yes", "no"}},
             {"hotel-stars", {"3", "4", "5"}}};
  return o;
}

Vocabulary kb_vocab(const KnowledgeBase& kb) {
  std::vector<std::string> texts = {"hello there friend"};
  for (const auto& e : kb.elements) texts.push_back(e.text);
  return Vocabulary::build(texts);
}

RetrievalResult ranked(std::vector<std::pair<int, double>> id_scores) {
  RetrievalResult r;
  for (auto& [id, score] : id_scores) {
    r.ranked.push_back({id, score, logistic_prob(score)});
  }
  r.k = static_cast<int>(r.ranked.size());
  return r;
}

// Element ids in presentation order, read off the provenance stream.
std::vector<int> element_order(const AugmentedContext& aug) {
  std::vector<int> order;
  for (int id : aug.provenance) {
    if (id >= 0 && (order.empty() || order.back() != id)) order.push_back(id);
  }
  return order;
}

}  // namespace

TEST_CASE("single element: BOS, element, marker, context") {
  KnowledgeBase kb = build_type_kb(small_ontology());
  Vocabulary v = kb_vocab(kb);
  std::vector<int> ctx = v.encode_text("hello there");
  AugmentedContext aug = integrate(ranked({{1, 0.7}}), kb, v, ctx,
                                   IntegrationMode::kOrdered, 0, 64);
  std::vector<int> expected = {Vocabulary::kBos, v.id("hotel-parking"),
                               Vocabulary::kKnowSep, v.id("hello"),
                               v.id("there")};
  CHECK(aug.tokens == expected);
  REQUIRE(aug.provenance.size() == aug.tokens.size());
  CHECK(aug.provenance[1] == 1);
  CHECK(aug.provenance[3] == -1);  // context tokens carry no element id
}

TEST_CASE("elements are presented least similar first") {
  KnowledgeBase kb = build_type_kb(small_ontology());
  Vocabulary v = kb_vocab(kb);
  std::vector<int> ctx = v.encode_text("hello");
  // Scores: A=0.9 (id 0), B=0.2 (id 1), C=0.5 (id 2); ranked input is
  // descending, so presentation must be B, C, A.
  AugmentedContext aug =
      integrate(ranked({{0, 0.9}, {2, 0.5}, {1, 0.2}}), kb, v, ctx,
                IntegrationMode::kOrdered, 0, 64);
  CHECK(element_order(aug) == std::vector<int>{1, 2, 0});
  // Context tokens are an exact suffix.
  CHECK(aug.tokens.back() == v.id("hello"));
  CHECK(aug.tokens.front() == Vocabulary::kBos);
}

TEST_CASE("shuffled mode permutes but keeps the same multiset") {
  KnowledgeBase kb = build_type_value_kb(small_ontology());
  Vocabulary v = kb_vocab(kb);
  std::vector<int> ctx = v.encode_text("hello there friend");
  RetrievalResult r =
      ranked({{0, 0.9}, {3, 0.8}, {5, 0.7}, {1, 0.6}, {6, 0.5}});

  AugmentedContext a = integrate(r, kb, v, ctx, IntegrationMode::kShuffled, 7, 128);
  AugmentedContext b = integrate(r, kb, v, ctx, IntegrationMode::kShuffled, 7, 128);
  CHECK(a.tokens == b.tokens);  // same seed, same layout

  std::set<std::vector<int>> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AugmentedContext s =
        integrate(r, kb, v, ctx, IntegrationMode::kShuffled, seed, 128);
    std::vector<int> order = element_order(s);
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 3, 5, 6});
    // Context stays an exact suffix regardless of the permutation.
    CHECK(std::equal(ctx.rbegin(), ctx.rend(), s.tokens.rbegin()));
    seen.insert(order);
  }
  CHECK(seen.size() > 1);  // actually shuffles across seeds
}

TEST_CASE("over-length drops least similar elements first") {
  KnowledgeBase kb = build_type_kb(small_ontology());
  Vocabulary v = kb_vocab(kb);
  std::vector<int> ctx = v.encode_text("hello there");
  RetrievalResult r = ranked({{2, 0.9}, {0, 0.5}, {1, 0.1}});
  // Full layout needs 1 + 3*2 + 2 = 9 tokens; cap at 7 forces one drop.
  AugmentedContext aug =
      integrate(r, kb, v, ctx, IntegrationMode::kOrdered, 0, 7);
  CHECK(aug.tokens.size() <= 7);
  std::vector<int> order = element_order(aug);
  CHECK(order == std::vector<int>{0, 2});  // id 1 (lowest score) dropped

  // Cap at 5: only the top element survives.
  AugmentedContext top1 = integrate(r, kb, v, ctx, IntegrationMode::kOrdered, 0, 5);
  CHECK(element_order(top1) == std::vector<int>{2});

  // Context alone not fitting is an error.
  CHECK_THROWS_AS(integrate(r, kb, v, ctx, IntegrationMode::kOrdered, 0, 2),
                  ValidationError);
}

TEST_CASE("oracle integrate hits the requested recall exactly") {
  Ontology o = small_ontology();
  KnowledgeBase kb = build_type_value_kb(o);
  Vocabulary v = kb_vocab(kb);
  std::vector<int> ctx = v.encode_text("hello");
  DialogState gold;
  gold.insert({"hotel-area", "west"});    // element id 0
  gold.insert({"hotel-parking", "no"});   // element id 3

  std::set<int> gold_ids = {0, 3};
  for (double target : {0.0, 0.5, 1.0}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      AugmentedContext aug =
          oracle_integrate(gold, kb, v, ctx, 4, target, seed, 256);
      std::vector<int> order = element_order(aug);
      REQUIRE(order.size() == 4);
      std::set<int> distinct(order.begin(), order.end());
      CHECK(distinct.size() == 4);  // no repeated elements
      int gold_present = 0;
      for (int id : order) gold_present += gold_ids.count(id);
      CHECK(gold_present == int(std::lround(target * 2)));
    }
  }
}

TEST_CASE("oracle integrate varies its composition across seeds") {
  Ontology o = small_ontology();
  KnowledgeBase kb = build_type_value_kb(o);
  Vocabulary v = kb_vocab(kb);
  std::vector<int> ctx = v.encode_text("hello");
  DialogState gold;
  gold.insert({"hotel-stars", "4"});

  std::set<std::vector<int>> layouts;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    layouts.insert(
        oracle_integrate(gold, kb, v, ctx, 3, 1.0, seed, 256).tokens);
  }
  CHECK(layouts.size() > 1);
  // Same seed reproduces the layout.
  CHECK(oracle_integrate(gold, kb, v, ctx, 3, 1.0, 4, 256).tokens ==
        oracle_integrate(gold, kb, v, ctx, 3, 1.0, 4, 256).tokens);
}

TEST_CASE("oracle integrate validates its inputs") {
  Ontology o = small_ontology();
  KnowledgeBase pairs = build_type_value_kb(o);
  KnowledgeBase types = build_type_kb(o);
  Vocabulary v = kb_vocab(pairs);
  std::vector<int> ctx = v.encode_text("hello");
  DialogState gold;
  gold.insert({"hotel-area", "west"});
  gold.insert({"hotel-parking", "no"});

  CHECK_THROWS_AS(oracle_integrate(gold, types, v, ctx, 2, 1.0, 0, 256),
                  ValidationError);  // wrong kb kind
  CHECK_THROWS_AS(oracle_integrate(gold, pairs, v, ctx, 1, 1.0, 0, 256),
                  ValidationError);  // k < |gold|
  CHECK_THROWS_AS(oracle_integrate(gold, pairs, v, ctx, 100, 1.0, 0, 256),
                  ValidationError);  // k > kb size
  CHECK_THROWS_AS(oracle_integrate(gold, pairs, v, ctx, 2, 1.5, 0, 256),
                  ValidationError);  // recall out of range
}
