#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgdst/corpus.hpp"
#include "kgdst/integration.hpp"
#include "kgdst/knowledge.hpp"
#include "kgdst/model.hpp"
#include "kgdst/retrieval.hpp"

namespace kgdst {

struct ParseResult {
  DialogState state;
  bool had_failures = false;  // at least one pair did not parse
};

// Total function: splits on ";" then the first "=", trimming whitespace.
// Unknown slots, malformed pairs, and duplicate slots are dropped and
// flagged. "none" (or an empty string) parses to the empty state.
ParseResult parse_linearized_state(const std::string& text,
                                   const Ontology& ontology);

// Fraction of positions with exact set equality.
double jga(const std::vector<DialogState>& predictions,
           const std::vector<DialogState>& golds);

struct EvalConfig {
  bool use_knowledge = true;  // false: plain seq2seq over the raw context
  int top_k = -1;             // -1: the kb's own top_k
  IntegrationMode integration = IntegrationMode::kOrdered;
  std::uint64_t shuffle_seed = 0;
};

struct TurnRecord {
  std::string dialog_id;
  int turn = 0;
  std::string gold;
  std::string predicted;
  std::vector<int> retrieved;  // ranked element ids
  double precision = 1.0;
  double recall = 1.0;
  bool correct = false;
  bool parse_failure = false;
};

struct EvalReport {
  double jga = 0.0;
  double retrieval_precision = 1.0;
  double retrieval_recall = 1.0;
  std::vector<TurnRecord> turns;
};

// Retrieve, integrate (per config), generate greedily, parse, compare.
// `kb` may be null only when use_knowledge is false.
EvalReport evaluate(const std::vector<Dialog>& dialogs, const Ontology& ontology,
                    const KnowledgeBase* kb, const ModelParams& params,
                    const EvalConfig& config);

std::string eval_report_to_json(const EvalReport& report);
void save_eval_report(const EvalReport& report, const std::string& path);

struct SanityRow {
  double recall_target = 0.0;
  double measured_recall = 0.0;
  double jga = 0.0;
};

// Controlled-recall curve: oracle-integrated contexts per target, JGA per
// row. kb must be TYPE_VALUE and params should come from an
// oracle-conditioned training run.
std::vector<SanityRow> sanity_check(const std::vector<Dialog>& dialogs,
                                    const Ontology& ontology,
                                    const KnowledgeBase& kb,
                                    const ModelParams& params,
                                    const std::vector<double>& recall_targets,
                                    int k, std::uint64_t seed);

std::string sanity_rows_to_csv(const std::vector<SanityRow>& rows);

// Gold element ids for one turn against a kb (singleton best-F1 set for
// TRAINING kbs).
std::set<int> gold_element_ids(const DialogState& state, const KnowledgeBase& kb);

}  // namespace kgdst
