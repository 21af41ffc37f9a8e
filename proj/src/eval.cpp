#include "kgdst/eval.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace kgdst {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

ParseResult parse_linearized_state(const std::string& text,
                                   const Ontology& ontology) {
  ParseResult result;
  const std::string trimmed = trim(text);
  if (trimmed.empty() || trimmed == "none") return result;
  std::stringstream ss(trimmed);
  std::string part;
  while (std::getline(ss, part, ';')) {
    part = trim(part);
    if (part.empty()) {
      result.had_failures = true;
      continue;
    }
    const std::size_t eq = part.find('=');
    if (eq == std::string::npos) {
      result.had_failures = true;
      continue;
    }
    const std::string slot = trim(part.substr(0, eq));
    const std::string value = trim(part.substr(eq + 1));
    if (slot.empty() || value.empty() || !ontology.has_slot(slot) ||
        result.state.has_slot(slot)) {
      result.had_failures = true;
      continue;
    }
    result.state.insert({slot, value});
  }
  return result;
}

double jga(const std::vector<DialogState>& predictions,
           const std::vector<DialogState>& golds) {
  if (predictions.size() != golds.size()) {
    throw ValidationError("jga: prediction/gold length mismatch");
  }
  if (golds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

std::set<int> gold_element_ids(const DialogState& state,
                               const KnowledgeBase& kb) {
  std::set<int> ids;
  if (kb.kind == KnowledgeKind::kTrainingExample) {
    ids.insert(gold_training_example(state, kb));
    return ids;
  }
  const std::vector<int> labels = gold_labels(state, kb);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) ids.insert(static_cast<int>(i));
  }
  return ids;
}

EvalReport evaluate(const std::vector<Dialog>& dialogs, const Ontology& ontology,
                    const KnowledgeBase* kb, const ModelParams& params,
                    const EvalConfig& config) {
  if (config.use_knowledge && kb == nullptr) {
    throw ValidationError("evaluate: knowledge requested but no kb given");
  }
  EvalReport report;
  std::vector<DialogState> preds, golds;
  double sum_p = 0.0, sum_r = 0.0;
  std::size_t turn_count = 0;
  Matrix kb_reps;  // kb encoded once, reused for every turn
  if (config.use_knowledge) kb_reps = kb_retrieval_reps(*kb, params);
  for (const auto& dialog : dialogs) {
    for (std::size_t t = 0; t < dialog.states.size(); ++t) {
      const DialogState& gold = dialog.states[t];
      const std::vector<int> ctx = build_dialog_context(
          dialog, t, params.vocab, params.config.max_ctx_len);

      TurnRecord record;
      record.dialog_id = dialog.id;
      record.turn = static_cast<int>(t);
      record.gold = linearize_state(gold, OrderPolicy::kAnnotation);

      std::vector<int> enc_tokens;
      if (config.use_knowledge) {
        const int k = config.top_k > 0 ? std::min(config.top_k, kb->size())
                                       : kb->top_k;
        RetrievalResult result = top_k_from_reps(ctx, kb_reps, params, k);
        std::set<int> retrieved_ids;
        for (const auto& s : result.ranked) {
          record.retrieved.push_back(s.id);
          retrieved_ids.insert(s.id);
        }
        const std::set<int> gold_ids = gold_element_ids(gold, *kb);
        std::tie(record.precision, record.recall) =
            retrieval_metrics(retrieved_ids, gold_ids);
        AugmentedContext aug = integrate(
            result, *kb, params.vocab, ctx, config.integration,
            config.shuffle_seed * 1000003u + turn_count,
            params.config.max_enc_len);
        enc_tokens = std::move(aug.tokens);
      } else {
        enc_tokens = with_bos(ctx);
      }

      ModelGraph graph(params, nullptr);
      EncodedSequence enc = graph.encode(enc_tokens);
      const std::vector<int> out =
          graph.generate(enc, params.config.max_dec_len);
      record.predicted = params.vocab.decode_tokens(out);
      ParseResult parsed = parse_linearized_state(record.predicted, ontology);
      record.parse_failure = parsed.had_failures;
      record.correct = parsed.state == gold;

      preds.push_back(std::move(parsed.state));
      golds.push_back(gold);
      sum_p += record.precision;
      sum_r += record.recall;
      report.turns.push_back(std::move(record));
      ++turn_count;
    }
  }
  report.jga = jga(preds, golds);
  if (turn_count > 0) {
    report.retrieval_precision = sum_p / static_cast<double>(turn_count);
    report.retrieval_recall = sum_r / static_cast<double>(turn_count);
  }
  return report;
}

std::string eval_report_to_json(const EvalReport& report) {
  json doc;
  doc["jga"] = report.jga;
  doc["retrieval_precision"] = report.retrieval_precision;
  doc["retrieval_recall"] = report.retrieval_recall;
  doc["turns"] = json::array();
  for (const auto& t : report.turns) {
    doc["turns"].push_back({{"dialog_id", t.dialog_id},
                            {"turn", t.turn},
                            {"gold", t.gold},
                            {"predicted", t.predicted},
                            {"retrieved", t.retrieved},
                            {"precision", t.precision},
                            {"recall", t.recall},
                            {"correct", t.correct},
                            {"parse_failure", t.parse_failure}});
  }
  return doc.dump(2);
}

void save_eval_report(const EvalReport& report, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw FormatError("cannot write eval report: " + path);
    out << eval_report_to_json(report) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

std::vector<SanityRow> sanity_check(const std::vector<Dialog>& dialogs,
                                    const Ontology& ontology,
                                    const KnowledgeBase& kb,
                                    const ModelParams& params,
                                    const std::vector<double>& recall_targets,
                                    int k, std::uint64_t seed) {
  if (kb.kind != KnowledgeKind::kTypeValue) {
    throw ValidationError("sanity_check: kb must be TYPE_VALUE");
  }
  std::vector<SanityRow> rows;
  for (double target : recall_targets) {
    std::vector<DialogState> preds, golds;
    double recall_sum = 0.0;
    std::size_t turn_count = 0;
    for (const auto& dialog : dialogs) {
      for (std::size_t t = 0; t < dialog.states.size(); ++t) {
        const DialogState& gold = dialog.states[t];
        const std::vector<int> ctx = build_dialog_context(
            dialog, t, params.vocab, params.config.max_ctx_len);
        AugmentedContext aug = oracle_integrate(
            gold, kb, params.vocab, ctx, k, target,
            seed * 1000003u + turn_count, params.config.max_enc_len);

        std::set<int> included;
        for (int id : aug.provenance) {
          if (id >= 0) included.insert(id);
        }
        const std::set<int> gold_ids = gold_element_ids(gold, kb);
        recall_sum += retrieval_metrics(included, gold_ids).second;

        ModelGraph graph(params, nullptr);
        EncodedSequence enc = graph.encode(aug.tokens);
        const std::vector<int> out =
            graph.generate(enc, params.config.max_dec_len);
        ParseResult parsed =
            parse_linearized_state(params.vocab.decode_tokens(out), ontology);
        preds.push_back(std::move(parsed.state));
        golds.push_back(gold);
        ++turn_count;
      }
    }
    SanityRow row;
    row.recall_target = target;
    row.measured_recall =
        turn_count > 0 ? recall_sum / static_cast<double>(turn_count) : 1.0;
    row.jga = jga(preds, golds);
    rows.push_back(row);
  }
  return rows;
}

std::string sanity_rows_to_csv(const std::vector<SanityRow>& rows) {
  std::string out = "recall_target,measured_recall,jga\n";
  for (const auto& r : rows) {
    out += json(r.recall_target).dump() + "," + json(r.measured_recall).dump() +
           "," + json(r.jga).dump() + "\n";
  }
  return out;
}

}  // namespace kgdst
