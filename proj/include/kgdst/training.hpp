#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kgdst/eval.hpp"
#include "kgdst/knowledge.hpp"
#include "kgdst/model.hpp"

namespace kgdst {

enum class Schedule { kJoint, kRetrievalThenDst };
enum class HeadMode { kShared, kSeparateHead };
enum class TrainIntegration { kOrdered, kShuffled, kOracleMixed, kNone };

struct TrainConfig {
  double retrieval_weight = 0.1;
  double dst_weight = 1.0;
  Schedule schedule = Schedule::kJoint;
  int phase1_steps = 0;  // RETRIEVAL_THEN_DST: retrieval-only prefix
  HeadMode head_mode = HeadMode::kShared;
  int top_k = -1;        // -1: the kb's own default
  int batch_size = 32;
  double lr = 1e-4;
  int steps = 1000;
  std::uint64_t seed = 0;
  double few_shot_fraction = 1.0;  // recorded for the config snapshot
  TrainIntegration integration = TrainIntegration::kOrdered;
  int negatives = 16;    // sampled negatives per step for TRAINING kbs
  int eval_every = 200;
  OrderPolicy order_policy = OrderPolicy::kLexicographic;
  std::vector<double> oracle_recalls = {0.0, 0.25, 0.5, 0.75, 1.0};
  // Per-example random permutation of the ontology's slot and value names,
  // applied consistently to the encoder input and the generation target.
  // Synthetic corpora draw slots and values uniformly, so a relabeled
  // example is another valid sample; rote recall of a turn's pairs stops
  // paying off and reading them from the augmented context is the only fit.
  // Requires single-token names and a shared value set; no-op otherwise.
  bool relabel_augment = false;
  // Learning-rate schedule: linear ramp from 0 over warmup_steps, then,
  // when cosine_decay is set, cosine decay from lr to 0 at `steps`.
  int warmup_steps = 0;
  bool cosine_decay = false;
  ModelConfig model;

  void validate() const;
};

struct TrainResult {
  ModelParams params;       // final
  ModelParams best_params;  // best dev JGA (final params if never evaluated)
  double best_dev_jga = -1.0;
  int best_step = -1;
  // JSON-lines: {"step",...,"l_ret","l_dst","l_total"} per step, periodic
  // {"step","dev_jga","dev_recall","dev_precision"}, and phase markers.
  std::vector<std::string> log_lines;
};

struct Checkpoint {
  ModelParams params;
  AdamState adam;
  std::string rng_state;
  int step = 0;
  // Sequential schedule only: scoring parameters frozen at the phase-1
  // boundary, carried so a resumed run scores identically.
  std::optional<ModelParams> frozen_retrieval;
};

// Joint multitask loop: per turn, retrieval BCE against gold labels plus
// teacher-forced DST loss over the integrated context; one Adam step per
// batch. `dev` drives the periodic JGA/recall evaluation and best-checkpoint
// selection.
TrainResult train_joint(const std::vector<Dialog>& train,
                        const std::vector<Dialog>& dev,
                        const Ontology& ontology, const KnowledgeBase& kb,
                        const TrainConfig& config,
                        const Checkpoint* resume = nullptr);

// Phase 1 optimizes retrieval only; phase 2 optimizes DST only, scoring
// with the phase-1 parameters frozen.
TrainResult train_sequential(const std::vector<Dialog>& train,
                             const std::vector<Dialog>& dev,
                             const Ontology& ontology, const KnowledgeBase& kb,
                             const TrainConfig& config,
                             const Checkpoint* resume = nullptr);

// No knowledge, no retrieval loss; same model, optimizer, and budget.
TrainResult seq2seq_baseline(const std::vector<Dialog>& train,
                             const std::vector<Dialog>& dev,
                             const Ontology& ontology,
                             const TrainConfig& config,
                             const Checkpoint* resume = nullptr);

// Versioned JSON container: config, vocabulary, tensors, optimizer state,
// RNG state. Loading resumes bit-identical single-threaded training.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Deterministic train/dev split by dialog order (dev = trailing fraction).
std::pair<std::vector<Dialog>, std::vector<Dialog>> split_dev(
    const std::vector<Dialog>& dialogs, double dev_fraction);

// Hook for resumable runs: full fidelity internal state after training.
struct TrainOutput {
  TrainResult result;
  Checkpoint final_checkpoint;
};

TrainOutput train_with_checkpoint(const std::vector<Dialog>& train,
                                  const std::vector<Dialog>& dev,
                                  const Ontology& ontology,
                                  const KnowledgeBase* kb,
                                  const TrainConfig& config,
                                  const Checkpoint* resume = nullptr);

}  // namespace kgdst
