#include "kgdst/knowledge.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace kgdst {

using nlohmann::json;

std::string knowledge_kind_name(KnowledgeKind kind) {
  switch (kind) {
    case KnowledgeKind::kType: return "type";
    case KnowledgeKind::kTypeValue: return "type_value";
    case KnowledgeKind::kTrainingExample: return "training";
  }
  return "unknown";
}

KnowledgeKind knowledge_kind_from_name(const std::string& name) {
  if (name == "type") return KnowledgeKind::kType;
  if (name == "type_value") return KnowledgeKind::kTypeValue;
  if (name == "training") return KnowledgeKind::kTrainingExample;
  throw ValidationError("unknown knowledge kind: " + name);
}

KnowledgeBase build_type_kb(const Ontology& ontology) {
  ontology.validate();
  KnowledgeBase kb;
  kb.kind = KnowledgeKind::kType;
  kb.top_k = 10;
  for (const auto& slot : ontology.slots) {
    KnowledgeElement e;
    e.id = kb.size();
    e.kind = KnowledgeKind::kType;
    e.text = slot.name;
    e.slot = slot.name;
    kb.elements.push_back(std::move(e));
  }
  kb.top_k = std::min(kb.top_k, kb.size());
  return kb;
}

KnowledgeBase build_type_value_kb(const Ontology& ontology) {
  ontology.validate();
  KnowledgeBase kb;
  kb.kind = KnowledgeKind::kTypeValue;
  kb.top_k = 30;
  for (const auto& slot : ontology.slots) {
    for (const auto& value : slot.values) {
      KnowledgeElement e;
      e.id = kb.size();
      e.kind = KnowledgeKind::kTypeValue;
      e.text = slot.name + ": " + value;
      e.pair = {slot.name, value};
      kb.elements.push_back(std::move(e));
    }
  }
  kb.top_k = std::min(kb.top_k, kb.size());
  return kb;
}

std::string render_context_text(const Dialog& dialog, std::size_t user_turn) {
  std::string out;
  std::size_t users_seen = 0;
  for (const auto& turn : dialog.turns) {
    const bool is_user = turn.speaker == Speaker::kUser;
    out += is_user ? "user: " : "system: ";
    out += turn.text;
    out += " ";
    if (is_user) {
      if (users_seen == user_turn) break;
      ++users_seen;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

KnowledgeBase build_training_kb(const std::vector<Dialog>& corpus, int n,
                                std::uint64_t seed) {
  struct TurnExample {
    const Dialog* dialog;
    std::size_t user_turn;
  };
  std::vector<TurnExample> examples;
  for (const auto& d : corpus) {
    for (std::size_t t = 0; t < d.states.size(); ++t) {
      examples.push_back({&d, t});
    }
  }
  if (static_cast<int>(examples.size()) < n) {
    throw ValidationError("build_training_kb: corpus has " +
                          std::to_string(examples.size()) +
                          " turn examples, need " + std::to_string(n));
  }
  std::vector<std::size_t> indices(examples.size());
  std::iota(indices.begin(), indices.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(indices.begin(), indices.end(), rng);
  indices.resize(n);
  std::sort(indices.begin(), indices.end());

  KnowledgeBase kb;
  kb.kind = KnowledgeKind::kTrainingExample;
  kb.top_k = 1;
  for (std::size_t idx : indices) {
    const TurnExample& ex = examples[idx];
    const DialogState& state = ex.dialog->states[ex.user_turn];
    KnowledgeElement e;
    e.id = kb.size();
    e.kind = KnowledgeKind::kTrainingExample;
    e.example_context = render_context_text(*ex.dialog, ex.user_turn);
    e.example_state = linearize_state(state, OrderPolicy::kAnnotation);
    for (const auto& p : state.pairs) e.example_slots.insert(p.slot);
    e.text = e.example_context + " state : " + e.example_state;
    kb.elements.push_back(std::move(e));
  }
  return kb;
}

std::vector<int> gold_labels(const DialogState& state, const KnowledgeBase& kb) {
  if (kb.kind == KnowledgeKind::kTrainingExample) {
    throw ValidationError(
        "gold_labels: TRAINING_EXAMPLE kb, use gold_training_example");
  }
  std::vector<int> labels(kb.elements.size(), 0);
  for (std::size_t i = 0; i < kb.elements.size(); ++i) {
    const KnowledgeElement& e = kb.elements[i];
    if (kb.kind == KnowledgeKind::kType) {
      labels[i] = state.has_slot(e.slot) ? 1 : 0;
    } else {
      labels[i] = state.contains(e.pair) ? 1 : 0;
    }
  }
  return labels;
}

double slot_set_f1(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& s : a) inter += b.count(s);
  return 2.0 * static_cast<double>(inter) /
         static_cast<double>(a.size() + b.size());
}

int gold_training_example(const DialogState& state, const KnowledgeBase& kb) {
  if (kb.kind != KnowledgeKind::kTrainingExample || kb.elements.empty()) {
    throw ValidationError("gold_training_example: need a non-empty TRAINING kb");
  }
  std::set<std::string> gold_slots;
  for (const auto& p : state.pairs) gold_slots.insert(p.slot);
  int best = 0;
  double best_f1 = -1.0;
  for (const auto& e : kb.elements) {
    const double f1 = slot_set_f1(gold_slots, e.example_slots);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = e.id;
    }
  }
  return best;
}

std::string knowledge_base_to_json(const KnowledgeBase& kb) {
  json doc;
  doc["kind"] = knowledge_kind_name(kb.kind);
  doc["top_k"] = kb.top_k;
  doc["elements"] = json::array();
  for (const auto& e : kb.elements) {
    json je;
    je["id"] = e.id;
    je["kind"] = knowledge_kind_name(e.kind);
    je["text"] = e.text;
    switch (e.kind) {
      case KnowledgeKind::kType:
        je["payload"] = {{"slot", e.slot}};
        break;
      case KnowledgeKind::kTypeValue:
        je["payload"] = {{"slot", e.pair.slot}, {"value", e.pair.value}};
        break;
      case KnowledgeKind::kTrainingExample:
        je["payload"] = {{"context", e.example_context},
                         {"state", e.example_state},
                         {"slots", std::vector<std::string>(e.example_slots.begin(),
                                                            e.example_slots.end())}};
        break;
    }
    doc["elements"].push_back(std::move(je));
  }
  return doc.dump(2);
}

KnowledgeBase knowledge_base_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("kb parse failure: ") + e.what());
  }
  KnowledgeBase kb;
  try {
    try {
      kb.kind = knowledge_kind_from_name(doc.at("kind").get<std::string>());
    } catch (const ValidationError& e) {
      throw FormatError(e.what());
    }
    kb.top_k = doc.at("top_k").get<int>();
    for (const json& je : doc.at("elements")) {
      KnowledgeElement e;
      e.id = je.at("id").get<int>();
      try {
        e.kind = knowledge_kind_from_name(je.at("kind").get<std::string>());
      } catch (const ValidationError& err) {
        throw FormatError(err.what());
      }
      e.text = je.at("text").get<std::string>();
      const json& payload = je.at("payload");
      switch (e.kind) {
        case KnowledgeKind::kType:
          e.slot = payload.at("slot").get<std::string>();
          break;
        case KnowledgeKind::kTypeValue:
          e.pair = {payload.at("slot").get<std::string>(),
                    payload.at("value").get<std::string>()};
          break;
        case KnowledgeKind::kTrainingExample: {
          e.example_context = payload.at("context").get<std::string>();
          e.example_state = payload.at("state").get<std::string>();
          for (const auto& s : payload.at("slots")) {
            e.example_slots.insert(s.get<std::string>());
          }
          break;
        }
      }
      kb.elements.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("kb record malformed: ") + e.what());
  }
  for (int i = 0; i < kb.size(); ++i) {
    if (kb.elements[i].id != i || kb.elements[i].kind != kb.kind) {
      throw ValidationError("kb element " + std::to_string(i) +
                            ": id or kind mismatch");
    }
  }
  return kb;
}

void save_knowledge_base(const KnowledgeBase& kb, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw FormatError("cannot write kb file: " + path);
    out << knowledge_base_to_json(kb) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

KnowledgeBase load_knowledge_base(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open kb file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return knowledge_base_from_json(buf.str());
}

}  // namespace kgdst
