#include "kgdst/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace kgdst {

using nlohmann::json;

void TrainConfig::validate() const {
  if (retrieval_weight < 0.0 || dst_weight < 0.0) {
    throw ValidationError("train config: loss weights must be >= 0");
  }
  if (steps < 1 || batch_size < 1) {
    throw ValidationError("train config: steps and batch_size must be >= 1");
  }
  if (warmup_steps < 0 || warmup_steps > steps) {
    throw ValidationError("train config: warmup_steps outside [0, steps]");
  }
  if (schedule == Schedule::kRetrievalThenDst &&
      (phase1_steps < 0 || phase1_steps > steps)) {
    throw ValidationError("train config: phase1_steps outside [0, steps]");
  }
}

namespace {

struct TurnExample {
  std::size_t dialog = 0;
  std::size_t turn = 0;
};

std::vector<TurnExample> collect_examples(const std::vector<Dialog>& dialogs) {
  std::vector<TurnExample> out;
  for (std::size_t d = 0; d < dialogs.size(); ++d) {
    for (std::size_t t = 0; t < dialogs[d].states.size(); ++t) {
      out.push_back({d, t});
    }
  }
  if (out.empty()) {
    throw ValidationError("training: corpus has no turn examples");
  }
  return out;
}

std::vector<int> target_tokens(const DialogState& state, OrderPolicy policy,
                               const ModelParams& params) {
  std::vector<int> toks =
      params.vocab.encode_text(linearize_state(state, policy));
  const std::size_t limit =
      static_cast<std::size_t>(params.config.max_dec_len - 1);
  if (toks.size() > limit) toks.resize(limit);
  toks.push_back(Vocabulary::kEos);
  return toks;
}

RetrievalResult rank_from_scores(const std::vector<double>& scores, int k) {
  std::vector<ScoredElement> scored;
  scored.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scored.push_back({static_cast<int>(i), scores[i], logistic_prob(scores[i])});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredElement& a, const ScoredElement& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.id < b.id;
                   });
  scored.resize(static_cast<std::size_t>(k));
  return RetrievalResult{std::move(scored), k};
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols =
      rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                    .get<double>();
    }
  }
  return m;
}

json model_params_to_json(const ModelParams& p) {
  json doc;
  doc["config"] = {{"d_model", p.config.d_model},
                   {"heads", p.config.heads},
                   {"enc_layers", p.config.enc_layers},
                   {"dec_layers", p.config.dec_layers},
                   {"ff_mult", p.config.ff_mult},
                   {"max_enc_len", p.config.max_enc_len},
                   {"max_dec_len", p.config.max_dec_len},
                   {"max_ctx_len", p.config.max_ctx_len},
                   {"separate_retrieval_head", p.config.separate_retrieval_head}};
  doc["vocab"] = p.vocab.tokens;
  json tensors;
  for (const auto& [name, m] : p.tensors) tensors[name] = matrix_to_json(m);
  doc["tensors"] = std::move(tensors);
  return doc;
}

ModelParams model_params_from_json(const json& doc) {
  ModelParams p;
  const json& c = doc.at("config");
  p.config.d_model = c.at("d_model").get<int>();
  p.config.heads = c.at("heads").get<int>();
  p.config.enc_layers = c.at("enc_layers").get<int>();
  p.config.dec_layers = c.at("dec_layers").get<int>();
  p.config.ff_mult = c.at("ff_mult").get<int>();
  p.config.max_enc_len = c.at("max_enc_len").get<int>();
  p.config.max_dec_len = c.at("max_dec_len").get<int>();
  p.config.max_ctx_len = c.at("max_ctx_len").get<int>();
  p.config.separate_retrieval_head =
      c.at("separate_retrieval_head").get<bool>();
  p.vocab = Vocabulary::from_tokens(
      doc.at("vocab").get<std::vector<std::string>>());
  for (const auto& [name, jm] : doc.at("tensors").items()) {
    p.tensors[name] = matrix_from_json(jm);
  }
  return p;
}

// One full training loop; kb may be null for the pure seq2seq path.
class Trainer {
 public:
  Trainer(const std::vector<Dialog>& train, const std::vector<Dialog>& dev,
          const Ontology& ontology, const KnowledgeBase* kb,
          const TrainConfig& config)
      : train_(train),
        dev_(dev),
        ontology_(ontology),
        kb_(kb),
        config_(config),
        examples_(collect_examples(train)) {
    config_.validate();
    const bool wants_retrieval =
        config_.integration == TrainIntegration::kOrdered ||
        config_.integration == TrainIntegration::kShuffled ||
        config_.retrieval_weight > 0.0;
    if (kb_ == nullptr && wants_retrieval &&
        config_.integration != TrainIntegration::kNone) {
      throw ValidationError("training: knowledge base required");
    }
  }

  TrainOutput run(const Checkpoint* resume) {
    ModelParams params;
    AdamState adam;
    std::mt19937_64 rng;
    int start_step = 0;
    std::optional<ModelParams> frozen;
    if (resume != nullptr) {
      params = resume->params;
      adam = resume->adam;
      std::istringstream in(resume->rng_state);
      in >> rng;
      start_step = resume->step;
      frozen = resume->frozen_retrieval;
    } else {
      params.config = config_.model;
      params.config.separate_retrieval_head =
          config_.head_mode == HeadMode::kSeparateHead;
      params.vocab = build_vocab();
      params.init(config_.seed);
      adam = AdamState::zeros_like(params);
      rng.seed(config_.seed + 0x9e3779b97f4a7c15ull);
    }
    if (kb_ != nullptr) kb_tokens_ = tokenize_kb(*kb_, params);

    TrainResult result;
    const int k = effective_k();
    AdamConfig adam_cfg{config_.lr, 0.9, 0.999, 1e-8};

    for (int step = start_step; step < config_.steps; ++step) {
      adam_cfg.lr = scheduled_lr(step);
      const bool retrieval_phase =
          config_.schedule == Schedule::kRetrievalThenDst &&
          step < config_.phase1_steps;
      if (config_.schedule == Schedule::kRetrievalThenDst &&
          step == config_.phase1_steps && !frozen.has_value()) {
        frozen = params;  // scoring stays fixed for the DST phase
        result.log_lines.push_back(
            json{{"step", step + 1}, {"phase", "dst"}}.dump());
      }

      const auto [l_ret, l_dst, l_total] =
          train_step(params, adam, adam_cfg, rng, k, retrieval_phase,
                     frozen.has_value() ? &*frozen : nullptr);
      result.log_lines.push_back(json{{"step", step + 1},
                                      {"l_ret", l_ret},
                                      {"l_dst", l_dst},
                                      {"l_total", l_total}}
                                     .dump());

      if (!dev_.empty() && config_.eval_every > 0 &&
          ((step + 1) % config_.eval_every == 0 || step + 1 == config_.steps)) {
        const auto [dev_jga, dev_p, dev_r] = dev_eval(params, k);
        result.log_lines.push_back(json{{"step", step + 1},
                                        {"dev_jga", dev_jga},
                                        {"dev_precision", dev_p},
                                        {"dev_recall", dev_r}}
                                       .dump());
        if (dev_jga > result.best_dev_jga) {
          result.best_dev_jga = dev_jga;
          result.best_step = step + 1;
          result.best_params = params;
        }
      }
    }
    if (result.best_step < 0) result.best_params = params;
    result.params = params;

    TrainOutput out;
    out.result = std::move(result);
    out.final_checkpoint.params = out.result.params;
    out.final_checkpoint.adam = std::move(adam);
    std::ostringstream rng_out;
    rng_out << rng;
    out.final_checkpoint.rng_state = rng_out.str();
    out.final_checkpoint.step = config_.steps;
    out.final_checkpoint.frozen_retrieval = std::move(frozen);
    return out;
  }

 private:
  Vocabulary build_vocab() const {
    Corpus c;
    c.ontology = ontology_;
    c.dialogs = train_;
    c.dialogs.insert(c.dialogs.end(), dev_.begin(), dev_.end());
    return Vocabulary::build_from_corpus(c);
  }

  double scheduled_lr(int step) const {
    double lr = config_.lr;
    if (config_.warmup_steps > 0 && step < config_.warmup_steps) {
      lr *= static_cast<double>(step + 1) / config_.warmup_steps;
    } else if (config_.cosine_decay) {
      const double past = step - config_.warmup_steps;
      const double span = config_.steps - config_.warmup_steps;
      lr *= 0.5 * (1.0 + std::cos(M_PI * past / std::max(span, 1.0)));
    }
    return lr;
  }

  int effective_k() const {
    if (kb_ == nullptr) return 0;
    return config_.top_k > 0 ? std::min(config_.top_k, kb_->size())
                             : kb_->top_k;
  }

  std::tuple<double, double, double> train_step(
      ModelParams& params, AdamState& adam, const AdamConfig& adam_cfg,
      std::mt19937_64& rng, int k, bool retrieval_phase,
      const ModelParams* frozen_scoring) {
    Gradients grads = Gradients::zeros_like(params);
    ModelGraph graph(params, &grads);
    Tape& tape = graph.tape();

    // Sequential phase 2 is DST-only: scoring comes from the frozen copy and
    // no retrieval loss is taken.
    const bool ret_loss_active =
        kb_ != nullptr &&
        (retrieval_phase || (config_.schedule == Schedule::kJoint &&
                             config_.retrieval_weight > 0.0));
    const bool need_scores =
        kb_ != nullptr &&
        (ret_loss_active ||
         ((config_.integration == TrainIntegration::kOrdered ||
           config_.integration == TrainIntegration::kShuffled) &&
          frozen_scoring == nullptr));

    // KB representations once per step with the current parameters.
    std::vector<Tape::ValueRef> kb_reps;
    if (need_scores) {
      kb_reps.reserve(kb_tokens_.size());
      const bool detach =
          config_.head_mode == HeadMode::kSeparateHead;
      for (const auto& toks : kb_tokens_) {
        EncodedSequence enc = graph.encode(toks);
        kb_reps.push_back(graph.retrieval_rep(enc.first, detach));
      }
    }

    std::uniform_int_distribution<std::size_t> pick(0, examples_.size() - 1);
    std::vector<Tape::ValueRef> example_losses;
    double sum_ret = 0.0, sum_dst = 0.0;
    int ret_terms = 0, dst_terms = 0;

    for (int b = 0; b < config_.batch_size; ++b) {
      const TurnExample ex = examples_[pick(rng)];
      const Dialog& dialog = train_[ex.dialog];
      const DialogState& gold = dialog.states[ex.turn];
      const std::vector<int> ctx = build_dialog_context(
          dialog, ex.turn, params.vocab, params.config.max_ctx_len);

      Tape::ValueRef l_ret{};
      std::vector<double> score_values;
      if (need_scores) {
        EncodedSequence ctx_enc = graph.encode(with_bos(ctx));
        Tape::ValueRef ctx_rep = graph.retrieval_rep(
            ctx_enc.first, config_.head_mode == HeadMode::kSeparateHead);
        std::vector<Tape::ValueRef> dots;
        dots.reserve(kb_reps.size());
        for (const auto& rep : kb_reps) {
          dots.push_back(tape.dot(ctx_rep, rep));
        }
        for (const auto& d : dots) score_values.push_back(tape.scalar(d));

        if (ret_loss_active) {
          if (kb_->kind == KnowledgeKind::kTrainingExample) {
            const int gold_id = gold_training_example(gold, *kb_);
            std::vector<Tape::ValueRef> subset{dots[static_cast<std::size_t>(gold_id)]};
            std::vector<int> labels{1};
            std::uniform_int_distribution<int> neg_pick(0, kb_->size() - 1);
            const int m = std::min(config_.negatives, kb_->size() - 1);
            std::set<int> used{gold_id};
            while (static_cast<int>(subset.size()) < m + 1) {
              const int cand = neg_pick(rng);
              if (!used.insert(cand).second) continue;
              subset.push_back(dots[static_cast<std::size_t>(cand)]);
              labels.push_back(0);
            }
            l_ret = tape.bce_with_logits(tape.concat_rows(subset), labels);
          } else {
            l_ret = tape.bce_with_logits(tape.concat_rows(dots),
                                         gold_labels(gold, *kb_));
          }
          sum_ret += tape.scalar(l_ret);
          ++ret_terms;
        }
      }

      Tape::ValueRef l_dst{};
      if (!retrieval_phase) {
        std::vector<int> enc_tokens;
        if (config_.integration == TrainIntegration::kNone || kb_ == nullptr) {
          enc_tokens = with_bos(ctx);
        } else if (config_.integration == TrainIntegration::kOracleMixed) {
          std::uniform_int_distribution<std::size_t> pick_recall(
              0, config_.oracle_recalls.size() - 1);
          const double target = config_.oracle_recalls[pick_recall(rng)];
          AugmentedContext aug =
              oracle_integrate(gold, *kb_, params.vocab, ctx, k, target, rng(),
                               params.config.max_enc_len);
          enc_tokens = std::move(aug.tokens);
        } else {
          if (frozen_scoring != nullptr && !frozen_reps_.has_value()) {
            frozen_reps_ = kb_retrieval_reps(*kb_, *frozen_scoring);
          }
          RetrievalResult ranked =
              frozen_scoring != nullptr
                  ? top_k_from_reps(ctx, *frozen_reps_, *frozen_scoring, k)
                  : rank_from_scores(score_values, k);
          const IntegrationMode mode =
              config_.integration == TrainIntegration::kShuffled
                  ? IntegrationMode::kShuffled
                  : IntegrationMode::kOrdered;
          AugmentedContext aug =
              integrate(ranked, *kb_, params.vocab, ctx, mode, rng(),
                        params.config.max_enc_len);
          enc_tokens = std::move(aug.tokens);
        }
        std::vector<int> target = target_tokens(
            config_.relabel_augment ? relabel_example(params, enc_tokens, gold, rng)
                                    : gold,
            config_.order_policy, params);
        EncodedSequence enc = graph.encode(enc_tokens);
        l_dst = graph.decode_loss(enc, target);
        sum_dst += tape.scalar(l_dst);
        ++dst_terms;
      }

      Tape::ValueRef total{};
      if (l_dst.valid() && config_.dst_weight > 0.0) {
        total = tape.scale(l_dst, config_.dst_weight);
      }
      if (l_ret.valid() && ret_loss_active) {
        const double w = retrieval_phase ? 1.0 : config_.retrieval_weight;
        Tape::ValueRef weighted = tape.scale(l_ret, w);
        total = total.valid() ? tape.add(total, weighted) : weighted;
      }
      if (total.valid()) example_losses.push_back(total);
    }

    double l_total_mean = 0.0;
    if (!example_losses.empty()) {
      Tape::ValueRef summed =
          example_losses.size() == 1
              ? example_losses[0]
              : tape.sum(tape.concat_rows(example_losses));
      Tape::ValueRef batch_loss =
          tape.scale(summed, 1.0 / static_cast<double>(config_.batch_size));
      l_total_mean = tape.scalar(batch_loss);
      graph.backward(batch_loss);
      adam_step(params, grads, adam, adam_cfg);
    }
    const double l_ret_mean =
        ret_terms > 0 ? sum_ret / static_cast<double>(ret_terms) : 0.0;
    const double l_dst_mean =
        dst_terms > 0 ? sum_dst / static_cast<double>(dst_terms) : 0.0;
    return {l_ret_mean, l_dst_mean, l_total_mean};
  }

  std::tuple<double, double, double> dev_eval(const ModelParams& params,
                                              int k) {
    if (config_.integration == TrainIntegration::kOracleMixed) {
      const auto rows =
          sanity_check(dev_, ontology_, *kb_, params, {1.0}, k, config_.seed);
      return {rows[0].jga, 1.0, rows[0].measured_recall};
    }
    EvalConfig ec;
    ec.use_knowledge =
        kb_ != nullptr && config_.integration != TrainIntegration::kNone;
    ec.top_k = k > 0 ? k : -1;
    ec.integration = config_.integration == TrainIntegration::kShuffled
                         ? IntegrationMode::kShuffled
                         : IntegrationMode::kOrdered;
    ec.shuffle_seed = config_.seed;
    EvalReport report = evaluate(dev_, ontology_, kb_, params, ec);
    return {report.jga, report.retrieval_precision, report.retrieval_recall};
  }

  // Collects the token ids of the given names, or empty when any of them
  // fails the single-non-reserved-token requirement.
  static std::vector<int> single_token_ids(const ModelParams& params,
                                           const std::set<std::string>& names) {
    std::vector<int> ids;
    std::set<int> seen;
    for (const auto& n : names) {
      const std::vector<int> toks = params.vocab.encode_text(n);
      if (toks.size() != 1 || toks[0] < Vocabulary::kNumReserved ||
          !seen.insert(toks[0]).second) {
        return {};
      }
      ids.push_back(toks[0]);
    }
    return ids;
  }

  // Swaps slot and value names under fresh uniform permutations,
  // consistently across the encoder input and the gold state; returns the
  // relabeled state. See TrainConfig::relabel_augment.
  DialogState relabel_example(const ModelParams& params, std::vector<int>& enc,
                              const DialogState& gold, std::mt19937_64& rng) {
    if (!relabel_ids_.has_value()) {
      std::set<std::string> slots, values;
      const std::vector<std::string> shared =
          ontology_.slots.empty() ? std::vector<std::string>{}
                                  : ontology_.slots.front().values;
      bool uniform_values = true;
      for (const auto& s : ontology_.slots) {
        slots.insert(s.name);
        values.insert(s.values.begin(), s.values.end());
        if (s.values != shared) uniform_values = false;
      }
      std::vector<int> slot_ids = single_token_ids(params, slots);
      std::vector<int> value_ids = single_token_ids(params, values);
      // Slot permutation keeps states valid only when every slot admits the
      // same values; otherwise the augmentation stays off.
      if (uniform_values && slot_ids.size() > 1 && value_ids.size() > 1) {
        relabel_ids_ = std::pair{std::move(slot_ids), std::move(value_ids)};
      } else {
        relabel_ids_ = std::pair{std::vector<int>{}, std::vector<int>{}};
      }
    }
    const auto& [slot_ids, value_ids] = *relabel_ids_;
    if (slot_ids.empty()) return gold;
    std::unordered_map<int, int> remap;
    for (const std::vector<int>& ids : {slot_ids, value_ids}) {
      std::vector<int> perm = ids;
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < ids.size(); ++i) remap[ids[i]] = perm[i];
    }
    for (int& t : enc) {
      const auto it = remap.find(t);
      if (it != remap.end()) t = it->second;
    }
    DialogState out;
    for (const auto& sv : gold.pairs) {
      const int s = remap.at(params.vocab.id(sv.slot));
      const int v = remap.at(params.vocab.id(sv.value));
      out.insert({params.vocab.tokens[static_cast<std::size_t>(s)],
                  params.vocab.tokens[static_cast<std::size_t>(v)]});
    }
    return out;
  }

  const std::vector<Dialog>& train_;
  const std::vector<Dialog>& dev_;
  const Ontology& ontology_;
  const KnowledgeBase* kb_;
  TrainConfig config_;
  std::vector<TurnExample> examples_;
  std::vector<std::vector<int>> kb_tokens_;
  std::optional<Matrix> frozen_reps_;  // phase-2 scoring, encoded once
  // (slot token ids, value token ids); both empty when augmentation is off.
  std::optional<std::pair<std::vector<int>, std::vector<int>>> relabel_ids_;
};

}  // namespace

TrainOutput train_with_checkpoint(const std::vector<Dialog>& train,
                                  const std::vector<Dialog>& dev,
                                  const Ontology& ontology,
                                  const KnowledgeBase* kb,
                                  const TrainConfig& config,
                                  const Checkpoint* resume) {
  Trainer trainer(train, dev, ontology, kb, config);
  return trainer.run(resume);
}

TrainResult train_joint(const std::vector<Dialog>& train,
                        const std::vector<Dialog>& dev,
                        const Ontology& ontology, const KnowledgeBase& kb,
                        const TrainConfig& config, const Checkpoint* resume) {
  TrainConfig cfg = config;
  cfg.schedule = Schedule::kJoint;
  return train_with_checkpoint(train, dev, ontology, &kb, cfg, resume).result;
}

TrainResult train_sequential(const std::vector<Dialog>& train,
                             const std::vector<Dialog>& dev,
                             const Ontology& ontology, const KnowledgeBase& kb,
                             const TrainConfig& config,
                             const Checkpoint* resume) {
  if (config.schedule != Schedule::kRetrievalThenDst) {
    throw ValidationError("train_sequential: schedule must be RETRIEVAL_THEN_DST");
  }
  return train_with_checkpoint(train, dev, ontology, &kb, config, resume).result;
}

TrainResult seq2seq_baseline(const std::vector<Dialog>& train,
                             const std::vector<Dialog>& dev,
                             const Ontology& ontology,
                             const TrainConfig& config,
                             const Checkpoint* resume) {
  TrainConfig cfg = config;
  cfg.retrieval_weight = 0.0;
  cfg.integration = TrainIntegration::kNone;
  cfg.schedule = Schedule::kJoint;
  return train_with_checkpoint(train, dev, ontology, nullptr, cfg, resume)
      .result;
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json doc;
  doc["version"] = 1;
  doc["step"] = ckpt.step;
  doc["rng"] = ckpt.rng_state;
  doc["model"] = model_params_to_json(ckpt.params);
  json adam;
  adam["step"] = ckpt.adam.step;
  for (const auto& [name, m] : ckpt.adam.m) adam["m"][name] = matrix_to_json(m);
  for (const auto& [name, m] : ckpt.adam.v) adam["v"][name] = matrix_to_json(m);
  doc["adam"] = std::move(adam);
  if (ckpt.frozen_retrieval.has_value()) {
    doc["frozen_retrieval"] = model_params_to_json(*ckpt.frozen_retrieval);
  }
  return doc.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint parse failure: ") + e.what());
  }
  if (doc.value("version", 0) != 1) {
    throw FormatError("checkpoint: unsupported version");
  }
  Checkpoint ckpt;
  ckpt.step = doc.at("step").get<int>();
  ckpt.rng_state = doc.at("rng").get<std::string>();
  ckpt.params = model_params_from_json(doc.at("model"));
  ckpt.adam.step = doc.at("adam").at("step").get<long>();
  if (doc.at("adam").contains("m")) {
    for (const auto& [name, jm] : doc.at("adam").at("m").items()) {
      ckpt.adam.m[name] = matrix_from_json(jm);
    }
    for (const auto& [name, jm] : doc.at("adam").at("v").items()) {
      ckpt.adam.v[name] = matrix_from_json(jm);
    }
  }
  if (doc.contains("frozen_retrieval")) {
    ckpt.frozen_retrieval = model_params_from_json(doc.at("frozen_retrieval"));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw FormatError("cannot write checkpoint: " + path);
    out << checkpoint_to_json(ckpt) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

std::pair<std::vector<Dialog>, std::vector<Dialog>> split_dev(
    const std::vector<Dialog>& dialogs, double dev_fraction) {
  if (dev_fraction < 0.0 || dev_fraction >= 1.0) {
    throw ValidationError("split_dev: fraction must be in [0, 1)");
  }
  const std::size_t n_dev = static_cast<std::size_t>(
      std::floor(dev_fraction * static_cast<double>(dialogs.size())));
  std::vector<Dialog> train(dialogs.begin(), dialogs.end() - static_cast<std::ptrdiff_t>(n_dev));
  std::vector<Dialog> dev(dialogs.end() - static_cast<std::ptrdiff_t>(n_dev), dialogs.end());
  return {std::move(train), std::move(dev)};
}

}  // namespace kgdst
