#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "kgdst/corpus.hpp"

namespace kgdst {

enum class KnowledgeKind { kType, kTypeValue, kTrainingExample };

std::string knowledge_kind_name(KnowledgeKind kind);
KnowledgeKind knowledge_kind_from_name(const std::string& name);

struct KnowledgeElement {
  int id = 0;
  KnowledgeKind kind = KnowledgeKind::kType;
  std::string text;

  // kType
  std::string slot;
  // kTypeValue
  SlotValue pair;
  // kTrainingExample
  std::string example_context;
  std::string example_state;
  std::set<std::string> example_slots;
};

struct KnowledgeBase {
  KnowledgeKind kind = KnowledgeKind::kType;
  std::vector<KnowledgeElement> elements;
  int top_k = 10;

  int size() const { return static_cast<int>(elements.size()); }
};

// One element per slot; text = slot name; top_k = 10.
KnowledgeBase build_type_kb(const Ontology& ontology);

// One element per (slot, value) pair; text = "slot: value"; top_k = 30.
KnowledgeBase build_type_value_kb(const Ontology& ontology);

// Samples n turn-level (context, state) examples without replacement;
// top_k = 1.
KnowledgeBase build_training_kb(const std::vector<Dialog>& corpus, int n,
                                std::uint64_t seed);

// Renders a dialog prefix up to and including user turn `user_turn` as text,
// with "user:" / "system:" role markers. Shared by build_training_kb and the
// context tokenizer so contexts compare like-for-like.
std::string render_context_text(const Dialog& dialog, std::size_t user_turn);

// Binary relevance per element; kType and kTypeValue only.
std::vector<int> gold_labels(const DialogState& state, const KnowledgeBase& kb);

// Element id with the highest slot-set F1 against `state`, ties to lowest id.
// F1 of two empty sets is 1.
int gold_training_example(const DialogState& state, const KnowledgeBase& kb);

double slot_set_f1(const std::set<std::string>& a, const std::set<std::string>& b);

std::string knowledge_base_to_json(const KnowledgeBase& kb);
KnowledgeBase knowledge_base_from_json(const std::string& text);
void save_knowledge_base(const KnowledgeBase& kb, const std::string& path);
KnowledgeBase load_knowledge_base(const std::string& path);

}  // namespace kgdst
