#include "kgdst/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace kgdst {

using nlohmann::json;

bool Ontology::has_slot(const std::string& name) const {
  return find_slot(name) != nullptr;
}

const SlotSpec* Ontology::find_slot(const std::string& name) const {
  for (const auto& s : slots) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::size_t Ontology::type_value_count() const {
  std::size_t n = 0;
  for (const auto& s : slots) n += s.values.size();
  return n;
}

void Ontology::validate() const {
  std::set<std::string> names;
  for (const auto& s : slots) {
    if (!names.insert(s.name).second) {
      throw ValidationError("duplicate slot name: " + s.name);
    }
    if (s.values.empty()) {
      throw ValidationError("slot has empty value list: " + s.name);
    }
    std::set<std::string> vals;
    for (const auto& v : s.values) {
      if (!vals.insert(v).second) {
        throw ValidationError("duplicate value '" + v + "' in slot " + s.name);
      }
      if (v.find(';') != std::string::npos || v.find('=') != std::string::npos) {
        throw ValidationError("value '" + v + "' in slot " + s.name +
                              " contains a reserved separator (';' or '=')");
      }
    }
  }
}

void DialogState::insert(SlotValue sv) {
  if (has_slot(sv.slot)) {
    throw ValidationError("state already has a value for slot " + sv.slot);
  }
  pairs.push_back(std::move(sv));
}

bool DialogState::contains(const SlotValue& sv) const {
  return std::find(pairs.begin(), pairs.end(), sv) != pairs.end();
}

bool DialogState::has_slot(const std::string& slot) const {
  return std::any_of(pairs.begin(), pairs.end(),
                     [&](const SlotValue& p) { return p.slot == slot; });
}

std::vector<std::string> DialogState::slot_names() const {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.slot);
  return out;
}

std::map<std::string, std::string> DialogState::as_map() const {
  std::map<std::string, std::string> m;
  for (const auto& p : pairs) m[p.slot] = p.value;
  return m;
}

bool DialogState::operator==(const DialogState& other) const {
  return as_map() == other.as_map();
}

std::size_t Dialog::user_turn_count() const {
  std::size_t n = 0;
  for (const auto& t : turns) {
    if (t.speaker == Speaker::kUser) ++n;
  }
  return n;
}

void Dialog::validate(const Ontology& ontology) const {
  if (turns.empty()) {
    throw ValidationError("dialog " + id + ": no turns");
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    Speaker expected = (i % 2 == 0) ? Speaker::kUser : Speaker::kSystem;
    if (turns[i].speaker != expected) {
      throw ValidationError("dialog " + id + ": turn " + std::to_string(i) +
                            " violates USER/SYSTEM alternation");
    }
  }
  if (states.size() != user_turn_count()) {
    throw ValidationError("dialog " + id + ": " + std::to_string(states.size()) +
                          " states for " + std::to_string(user_turn_count()) +
                          " user turns");
  }
  for (const auto& state : states) {
    std::set<std::string> seen;
    for (const auto& p : state.pairs) {
      if (!seen.insert(p.slot).second) {
        throw ValidationError("dialog " + id + ": duplicate slot " + p.slot +
                              " in state");
      }
      if (!ontology.has_slot(p.slot)) {
        throw ValidationError("dialog " + id + ": unknown slot " + p.slot);
      }
      if (p.value.find(';') != std::string::npos ||
          p.value.find('=') != std::string::npos) {
        throw ValidationError("dialog " + id + ": value '" + p.value +
                              "' contains a reserved separator");
      }
    }
  }
}

namespace {

Speaker parse_speaker(const std::string& s, const std::string& dialog_id) {
  if (s == "USER") return Speaker::kUser;
  if (s == "SYSTEM") return Speaker::kSystem;
  throw FormatError("dialog " + dialog_id + ": unknown speaker '" + s + "'");
}

}  // namespace

Corpus parse_corpus_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("corpus parse failure: ") + e.what());
  }
  Corpus corpus;
  try {
    const json& onto = doc.at("ontology");
    if (onto.contains("domains")) {
      corpus.ontology.domains = onto.at("domains").get<std::vector<std::string>>();
    }
    for (const json& js : onto.at("slots")) {
      SlotSpec spec;
      spec.name = js.at("name").get<std::string>();
      spec.values = js.at("values").get<std::vector<std::string>>();
      corpus.ontology.slots.push_back(std::move(spec));
    }
    if (corpus.ontology.domains.empty()) {
      std::set<std::string> doms;
      for (const auto& s : corpus.ontology.slots) {
        auto dash = s.name.find('-');
        if (dash != std::string::npos) doms.insert(s.name.substr(0, dash));
      }
      corpus.ontology.domains.assign(doms.begin(), doms.end());
    }
    for (const json& jd : doc.value("dialogs", json::array())) {
      Dialog d;
      d.id = jd.at("id").get<std::string>();
      for (const json& jt : jd.at("turns")) {
        Turn t;
        t.speaker = parse_speaker(jt.at("speaker").get<std::string>(), d.id);
        t.text = jt.at("text").get<std::string>();
        d.turns.push_back(std::move(t));
      }
      for (const json& jstate : jd.at("states")) {
        DialogState state;
        for (const json& jpair : jstate) {
          if (!jpair.is_array() || jpair.size() != 2) {
            throw FormatError("dialog " + d.id + ": malformed state pair");
          }
          state.insert({jpair[0].get<std::string>(), jpair[1].get<std::string>()});
        }
        d.states.push_back(std::move(state));
      }
      corpus.dialogs.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("corpus record malformed: ") + e.what());
  }
  corpus.ontology.validate();
  for (const auto& d : corpus.dialogs) d.validate(corpus.ontology);
  return corpus;
}

std::string corpus_to_json(const Corpus& corpus) {
  json onto;
  onto["domains"] = corpus.ontology.domains;
  onto["slots"] = json::array();
  for (const auto& s : corpus.ontology.slots) {
    onto["slots"].push_back({{"name", s.name}, {"values", s.values}});
  }
  json dialogs = json::array();
  for (const auto& d : corpus.dialogs) {
    json jd;
    jd["id"] = d.id;
    jd["turns"] = json::array();
    for (const auto& t : d.turns) {
      jd["turns"].push_back(
          {{"speaker", t.speaker == Speaker::kUser ? "USER" : "SYSTEM"},
           {"text", t.text}});
    }
    jd["states"] = json::array();
    for (const auto& state : d.states) {
      json jstate = json::array();
      for (const auto& p : state.pairs) {
        jstate.push_back(json::array({p.slot, p.value}));
      }
      jd["states"].push_back(std::move(jstate));
    }
    dialogs.push_back(std::move(jd));
  }
  json doc;
  doc["ontology"] = std::move(onto);
  doc["dialogs"] = std::move(dialogs);
  return doc.dump(2);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open corpus file: " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus_json(buf.str());
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw FormatError("cannot write corpus file: " + path);
    }
    out << corpus_to_json(corpus) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

Corpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_dialogs < 1 || spec.num_domains < 1 || spec.slots_per_domain < 1 ||
      spec.values_per_slot < 1 || spec.min_user_turns < 1 ||
      spec.max_user_turns < spec.min_user_turns ||
      spec.max_mentions_per_turn < 1) {
    throw ValidationError("synthetic spec: all counts must be >= 1");
  }
  Corpus corpus;
  for (int d = 0; d < spec.num_domains; ++d) {
    corpus.ontology.domains.push_back("dom" + std::to_string(d));
    for (int s = 0; s < spec.slots_per_domain; ++s) {
      SlotSpec slot;
      slot.name = "dom" + std::to_string(d) + "-slot" + std::to_string(s);
      for (int v = 0; v < spec.values_per_slot; ++v) {
        slot.values.push_back("val" + std::to_string(v));
      }
      corpus.ontology.slots.push_back(std::move(slot));
    }
  }
  corpus.ontology.validate();

  std::mt19937_64 rng(spec.seed);
  const int num_slots = static_cast<int>(corpus.ontology.slots.size());

  for (int i = 0; i < spec.num_dialogs; ++i) {
    Dialog dialog;
    dialog.id = "syn-" + std::to_string(i);
    std::uniform_int_distribution<int> turns_dist(spec.min_user_turns,
                                                  spec.max_user_turns);
    const int user_turns = turns_dist(rng);

    std::vector<int> slot_order(num_slots);
    std::iota(slot_order.begin(), slot_order.end(), 0);
    std::shuffle(slot_order.begin(), slot_order.end(), rng);

    DialogState cumulative;
    std::size_t next_slot = 0;
    for (int t = 0; t < user_turns; ++t) {
      std::uniform_int_distribution<int> mention_dist(1,
                                                      spec.max_mentions_per_turn);
      int mentions = mention_dist(rng);
      std::string utterance = (t == 0) ? "hello i am looking for a booking"
                                       : "also";
      for (int m = 0; m < mentions && next_slot < slot_order.size(); ++m) {
        const int slot_idx = slot_order[next_slot++];
        const SlotSpec& slot = corpus.ontology.slots[slot_idx];
        // Uniform value choice; values must not be predictable from the
        // rest of the dialog or the state-tracking task degenerates.
        std::uniform_int_distribution<int> value_dist(
            0, static_cast<int>(slot.values.size()) - 1);
        const std::string& value = slot.values[value_dist(rng)];
        utterance += " i want " + slot.name + " to be " + value;
        cumulative.insert({slot.name, value});
      }
      dialog.turns.push_back({Speaker::kUser, utterance});
      dialog.states.push_back(cumulative);
      if (t + 1 < user_turns) {
        // The system recaps which slots are constrained so far (names only,
        // as a booking agent would confirm) before prompting for more.
        std::string recap = "ok noted";
        for (const auto& sv : cumulative.pairs) recap += " " + sv.slot;
        dialog.turns.push_back({Speaker::kSystem, recap + " anything else"});
      }
    }
    corpus.dialogs.push_back(std::move(dialog));
  }
  for (const auto& d : corpus.dialogs) d.validate(corpus.ontology);
  return corpus;
}

std::vector<Dialog> few_shot_sample(const std::vector<Dialog>& corpus,
                                    double fraction, std::uint64_t seed) {
  if (corpus.empty()) {
    throw ValidationError("few_shot_sample: empty corpus");
  }
  if (fraction <= 0.0 || fraction > 1.0) {
    throw ValidationError("few_shot_sample: fraction must be in (0, 1]");
  }
  const std::size_t n =
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(corpus.size())));
  std::vector<std::size_t> indices(corpus.size());
  std::iota(indices.begin(), indices.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(indices.begin(), indices.end(), rng);
  indices.resize(n);
  std::sort(indices.begin(), indices.end());
  std::vector<Dialog> out;
  out.reserve(n);
  for (std::size_t idx : indices) out.push_back(corpus[idx]);
  return out;
}

std::string linearize_state(const DialogState& state, OrderPolicy policy) {
  if (state.empty()) return "none";
  std::vector<SlotValue> pairs = state.pairs;
  if (policy == OrderPolicy::kLexicographic) {
    std::sort(pairs.begin(), pairs.end(),
              [](const SlotValue& a, const SlotValue& b) { return a.slot < b.slot; });
  }
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i > 0) out += " ; ";
    out += pairs[i].slot + "=" + pairs[i].value;
  }
  return out;
}

}  // namespace kgdst
