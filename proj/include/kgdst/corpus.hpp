#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgdst {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SlotSpec {
  std::string name;  // "domain-slot"
  std::vector<std::string> values;
};

struct Ontology {
  std::vector<std::string> domains;
  std::vector<SlotSpec> slots;

  bool has_slot(const std::string& name) const;
  const SlotSpec* find_slot(const std::string& name) const;
  std::size_t type_value_count() const;

  // Throws ValidationError on duplicate slot names, empty or duplicate
  // value lists, or values containing the reserved separators ";" / "=".
  void validate() const;
};

struct SlotValue {
  std::string slot;
  std::string value;

  auto operator<=>(const SlotValue&) const = default;
};

// A mapping slot -> value. Pair order is the annotation order; equality is
// set equality.
struct DialogState {
  std::vector<SlotValue> pairs;

  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
  // Throws ValidationError if the slot is already present.
  void insert(SlotValue sv);
  bool contains(const SlotValue& sv) const;
  bool has_slot(const std::string& slot) const;
  std::vector<std::string> slot_names() const;
  std::map<std::string, std::string> as_map() const;

  bool operator==(const DialogState& other) const;
};

enum class Speaker { kUser, kSystem };

struct Turn {
  Speaker speaker = Speaker::kUser;
  std::string text;
};

struct Dialog {
  std::string id;
  std::vector<Turn> turns;              // strictly alternating, USER first
  std::vector<DialogState> states;      // cumulative, one per USER turn

  std::size_t user_turn_count() const;
  // Checks turn alternation, state count, and slot membership in `ontology`.
  void validate(const Ontology& ontology) const;
};

struct Corpus {
  Ontology ontology;
  std::vector<Dialog> dialogs;
};

// Interchange format: one JSON document per corpus, see README.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus parse_corpus_json(const std::string& text);
std::string corpus_to_json(const Corpus& corpus);

struct SyntheticSpec {
  int num_dialogs = 200;
  int num_domains = 3;
  int slots_per_domain = 4;
  int values_per_slot = 6;
  int min_user_turns = 2;
  int max_user_turns = 4;
  int max_mentions_per_turn = 2;
  std::uint64_t seed = 0;
};

// Deterministic given the spec. Each USER utterance templatically states the
// assignments introduced at that turn (values drawn uniformly per mention);
// SYSTEM turns recap the accumulated slot names without values.
Corpus generate_synthetic(const SyntheticSpec& spec);

// Samples ceil(fraction * |corpus|) dialogs without replacement, preserving
// original order among the selected.
std::vector<Dialog> few_shot_sample(const std::vector<Dialog>& corpus,
                                    double fraction, std::uint64_t seed);

enum class OrderPolicy { kAnnotation, kLexicographic };

// "slot1=value1 ; slot2=value2 ; ..."; empty state -> "none".
std::string linearize_state(const DialogState& state, OrderPolicy policy);

}  // namespace kgdst
