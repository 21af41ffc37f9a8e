#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "kgdst/corpus.hpp"
#include "kgdst/eval.hpp"
#include "kgdst/knowledge.hpp"
#include "kgdst/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kgdst;

namespace {

// All outputs go through a temp file + rename so partial writes never land.
void write_atomic(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw FormatError("cannot write " + path);
    out << content;
  }
  fs::rename(tmp, path);
}

std::string resolve_out(const std::string& path) {
  const char* dir = std::getenv("KGDST_OUT_DIR");
  if (dir == nullptr || *dir == '\0' || fs::path(path).is_absolute()) {
    return path;
  }
  return (fs::path(dir) / path).string();
}

void write_snapshot(const std::string& out_path, const json& snapshot) {
  fs::path p(out_path);
  const std::string snap_path =
      (p.parent_path() / (p.stem().string() + ".config.json")).string();
  write_atomic(snap_path, snapshot.dump(2) + "\n");
}

TrainIntegration integration_from_name(const std::string& name) {
  if (name == "ordered") return TrainIntegration::kOrdered;
  if (name == "shuffled") return TrainIntegration::kShuffled;
  if (name == "oracle") return TrainIntegration::kOracleMixed;
  if (name == "none") return TrainIntegration::kNone;
  throw ValidationError("unknown integration mode: " + name);
}

std::vector<double> parse_recalls(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw ValidationError("--recalls: empty list");
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Knowledge-grounded dialog state tracking"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  SyntheticSpec spec;
  std::string gen_out = "corpus.json";
  gen->add_option("--dialogs", spec.num_dialogs, "Number of dialogs");
  gen->add_option("--domains", spec.num_domains, "Number of domains");
  gen->add_option("--slots", spec.slots_per_domain, "Slots per domain");
  gen->add_option("--values", spec.values_per_slot, "Values per slot");
  gen->add_option("--turns-min", spec.min_user_turns, "Min user turns");
  gen->add_option("--turns-max", spec.max_user_turns, "Max user turns");
  gen->add_option("--mentions-max", spec.max_mentions_per_turn,
                  "Max new slots per user turn");
  gen->add_option("--seed", spec.seed, "RNG seed");
  gen->add_option("--out", gen_out, "Output corpus path");

  // build-kb
  auto* bkb = app.add_subcommand("build-kb", "Build a knowledge base");
  std::string kb_corpus, kb_kind = "type_value", kb_out = "kb.json";
  int kb_n = 500, kb_top_k = -1;
  std::uint64_t kb_seed = 0;
  bkb->add_option("--corpus", kb_corpus, "Corpus path")->required();
  bkb->add_option("--kind", kb_kind, "type | type_value | training");
  bkb->add_option("--n", kb_n, "Training-example sample size");
  bkb->add_option("--seed", kb_seed, "RNG seed (training kind)");
  bkb->add_option("--top-k", kb_top_k, "Override default retrieval width");
  bkb->add_option("--out", kb_out, "Output kb path");

  // few-shot
  auto* few = app.add_subcommand("few-shot", "Sample a few-shot subset");
  std::string few_corpus, few_out = "fewshot.json";
  double few_fraction = 0.01;
  std::uint64_t few_seed = 0;
  few->add_option("--corpus", few_corpus, "Corpus path")->required();
  few->add_option("--fraction", few_fraction, "Fraction in (0, 1]");
  few->add_option("--seed", few_seed, "RNG seed");
  few->add_option("--out", few_out, "Output corpus path");

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->set_config("--config", "", "JSON config file (flags override)");
  std::string tr_corpus, tr_dev, tr_kb, tr_mode = "joint",
              tr_integration = "ordered", tr_head = "shared",
              tr_order = "lexicographic", tr_out = "run";
  std::string tr_resume;
  TrainConfig tc;
  double dev_fraction = 0.1;
  tr->add_option("--corpus", tr_corpus, "Training corpus")->required();
  tr->add_option("--dev-corpus", tr_dev, "Dev corpus (default: split)");
  tr->add_option("--dev-fraction", dev_fraction, "Dev split when no dev corpus");
  tr->add_option("--kb", tr_kb, "Knowledge base path");
  tr->add_option("--mode", tr_mode, "joint | sequential | seq2seq");
  tr->add_option("--integration", tr_integration,
                 "ordered | shuffled | oracle | none");
  tr->add_option("--head", tr_head, "shared | separate");
  tr->add_option("--order-policy", tr_order, "annotation | lexicographic");
  tr->add_option("--retrieval-weight", tc.retrieval_weight, "Retrieval loss weight");
  tr->add_option("--dst-weight", tc.dst_weight, "DST loss weight");
  tr->add_option("--top-k", tc.top_k, "Retrieval width (-1: kb default)");
  tr->add_option("--batch-size", tc.batch_size, "Batch size");
  tr->add_option("--lr", tc.lr, "Learning rate");
  tr->add_option("--steps", tc.steps, "Training steps");
  tr->add_option("--phase1-steps", tc.phase1_steps, "Sequential: retrieval steps");
  tr->add_option("--seed", tc.seed, "RNG seed");
  tr->add_option("--eval-every", tc.eval_every, "Dev evaluation period");
  tr->add_option("--few-shot-fraction", tc.few_shot_fraction,
                 "Train on this fraction of the corpus");
  tr->add_option("--d-model", tc.model.d_model, "Model width");
  tr->add_option("--heads", tc.model.heads, "Attention heads");
  tr->add_option("--enc-layers", tc.model.enc_layers, "Encoder layers");
  tr->add_option("--dec-layers", tc.model.dec_layers, "Decoder layers");
  tr->add_option("--max-enc-len", tc.model.max_enc_len, "Max encoder length");
  tr->add_option("--max-ctx-len", tc.model.max_ctx_len, "Max context length");
  tr->add_flag("--relabel", tc.relabel_augment,
               "Augment: per-example permutation of slot and value names");
  tr->add_option("--oracle-recalls", tc.oracle_recalls,
                 "Oracle integration: recall targets sampled per example")
      ->delimiter(',');
  tr->add_option("--warmup-steps", tc.warmup_steps,
                 "Linear learning-rate warmup steps");
  tr->add_flag("--cosine-decay", tc.cosine_decay,
               "Cosine learning-rate decay to 0 after warmup");
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
  tr->add_option("--out-dir", tr_out, "Output directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  std::string ev_corpus, ev_kb, ev_ckpt, ev_out = "report.json",
              ev_integration = "ordered";
  int ev_top_k = -1;
  std::uint64_t ev_seed = 0;
  ev->add_option("--corpus", ev_corpus, "Eval corpus")->required();
  ev->add_option("--kb", ev_kb, "Knowledge base (omit for seq2seq)");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--integration", ev_integration, "ordered | shuffled");
  ev->add_option("--top-k", ev_top_k, "Retrieval width (-1: kb default)");
  ev->add_option("--seed", ev_seed, "Shuffle seed");
  ev->add_option("--out", ev_out, "Report path");

  // sanity-check
  auto* sc = app.add_subcommand("sanity-check", "Controlled-recall JGA curve");
  std::string sc_corpus, sc_kb, sc_ckpt, sc_out = "sanity.csv",
              sc_recalls = "0.0,0.25,0.5,0.75,1.0";
  int sc_k = 30;
  std::uint64_t sc_seed = 0;
  sc->add_option("--corpus", sc_corpus, "Eval corpus")->required();
  sc->add_option("--kb", sc_kb, "TYPE_VALUE knowledge base")->required();
  sc->add_option("--checkpoint", sc_ckpt, "Checkpoint path")->required();
  sc->add_option("--recalls", sc_recalls, "Comma-separated recall targets");
  sc->add_option("--k", sc_k, "Elements per turn");
  sc->add_option("--seed", sc_seed, "RNG seed");
  sc->add_option("--out", sc_out, "CSV path");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    Corpus corpus = generate_synthetic(spec);
    const std::string out = resolve_out(gen_out);
    write_atomic(out, corpus_to_json(corpus) + "\n");
    write_snapshot(out, json{{"command", "gen-data"},
                             {"dialogs", spec.num_dialogs},
                             {"domains", spec.num_domains},
                             {"slots", spec.slots_per_domain},
                             {"values", spec.values_per_slot},
                             {"turns_min", spec.min_user_turns},
                             {"turns_max", spec.max_user_turns},
                             {"mentions_max", spec.max_mentions_per_turn},
                             {"seed", spec.seed},
                             {"out", out}});
    std::cout << "wrote " << out << " (" << corpus.dialogs.size()
              << " dialogs)\n";
    return 0;
  }

  if (bkb->parsed()) {
    Corpus corpus = load_corpus(kb_corpus);
    KnowledgeBase kb;
    const KnowledgeKind kind = knowledge_kind_from_name(kb_kind);
    switch (kind) {
      case KnowledgeKind::kType:
        kb = build_type_kb(corpus.ontology);
        break;
      case KnowledgeKind::kTypeValue:
        kb = build_type_value_kb(corpus.ontology);
        break;
      case KnowledgeKind::kTrainingExample:
        kb = build_training_kb(corpus.dialogs, kb_n, kb_seed);
        break;
    }
    if (kb_top_k > 0) kb.top_k = std::min(kb_top_k, kb.size());
    const std::string out = resolve_out(kb_out);
    write_atomic(out, knowledge_base_to_json(kb) + "\n");
    write_snapshot(out, json{{"command", "build-kb"},
                             {"corpus", kb_corpus},
                             {"kind", kb_kind},
                             {"n", kb_n},
                             {"seed", kb_seed},
                             {"top_k", kb.top_k},
                             {"out", out}});
    std::cout << "wrote " << out << " (" << kb.size() << " elements)\n";
    return 0;
  }

  if (few->parsed()) {
    Corpus corpus = load_corpus(few_corpus);
    Corpus subset;
    subset.ontology = corpus.ontology;
    subset.dialogs = few_shot_sample(corpus.dialogs, few_fraction, few_seed);
    const std::string out = resolve_out(few_out);
    write_atomic(out, corpus_to_json(subset) + "\n");
    write_snapshot(out, json{{"command", "few-shot"},
                             {"corpus", few_corpus},
                             {"fraction", few_fraction},
                             {"seed", few_seed},
                             {"out", out}});
    std::cout << "wrote " << out << " (" << subset.dialogs.size()
              << " dialogs)\n";
    return 0;
  }

  if (tr->parsed()) {
    Corpus corpus = load_corpus(tr_corpus);
    std::vector<Dialog> train_dialogs, dev_dialogs;
    if (!tr_dev.empty()) {
      train_dialogs = corpus.dialogs;
      dev_dialogs = load_corpus(tr_dev).dialogs;
    } else {
      std::tie(train_dialogs, dev_dialogs) =
          split_dev(corpus.dialogs, dev_fraction);
    }
    if (tc.few_shot_fraction < 1.0) {
      train_dialogs =
          few_shot_sample(train_dialogs, tc.few_shot_fraction, tc.seed);
    }
    tc.integration = integration_from_name(tr_integration);
    tc.head_mode =
        tr_head == "separate" ? HeadMode::kSeparateHead : HeadMode::kShared;
    tc.order_policy = tr_order == "annotation" ? OrderPolicy::kAnnotation
                                               : OrderPolicy::kLexicographic;
    KnowledgeBase kb;
    const bool have_kb = !tr_kb.empty();
    if (have_kb) kb = load_knowledge_base(tr_kb);

    Checkpoint resume;
    const bool resuming = !tr_resume.empty();
    if (resuming) resume = load_checkpoint(tr_resume);

    TrainOutput out;
    if (tr_mode == "seq2seq") {
      tc.integration = TrainIntegration::kNone;
      tc.retrieval_weight = 0.0;
      out = train_with_checkpoint(train_dialogs, dev_dialogs, corpus.ontology,
                                  nullptr, tc, resuming ? &resume : nullptr);
    } else {
      if (!have_kb) throw ValidationError("train: --kb required for " + tr_mode);
      tc.schedule = tr_mode == "sequential" ? Schedule::kRetrievalThenDst
                                            : Schedule::kJoint;
      out = train_with_checkpoint(train_dialogs, dev_dialogs, corpus.ontology,
                                  &kb, tc, resuming ? &resume : nullptr);
    }

    const fs::path out_dir(resolve_out(tr_out));
    fs::create_directories(out_dir);
    write_atomic((out_dir / "checkpoint.json").string(),
                 checkpoint_to_json(out.final_checkpoint) + "\n");
    Checkpoint best = out.final_checkpoint;
    best.params = out.result.best_params;
    write_atomic((out_dir / "best_checkpoint.json").string(),
                 checkpoint_to_json(best) + "\n");
    std::string log_text;
    for (const auto& line : out.result.log_lines) log_text += line + "\n";
    write_atomic((out_dir / "train_log.jsonl").string(), log_text);
    json snapshot{{"command", "train"},
                  {"corpus", tr_corpus},
                  {"dev_corpus", tr_dev},
                  {"dev_fraction", dev_fraction},
                  {"kb", tr_kb},
                  {"mode", tr_mode},
                  {"integration", tr_integration},
                  {"head", tr_head},
                  {"order_policy", tr_order},
                  {"retrieval_weight", tc.retrieval_weight},
                  {"dst_weight", tc.dst_weight},
                  {"top_k", tc.top_k},
                  {"batch_size", tc.batch_size},
                  {"lr", tc.lr},
                  {"steps", tc.steps},
                  {"phase1_steps", tc.phase1_steps},
                  {"seed", tc.seed},
                  {"eval_every", tc.eval_every},
                  {"few_shot_fraction", tc.few_shot_fraction},
                  {"oracle_recalls", tc.oracle_recalls},
                  {"relabel_augment", tc.relabel_augment},
                  {"warmup_steps", tc.warmup_steps},
                  {"cosine_decay", tc.cosine_decay},
                  {"d_model", tc.model.d_model},
                  {"heads", tc.model.heads},
                  {"enc_layers", tc.model.enc_layers},
                  {"dec_layers", tc.model.dec_layers},
                  {"max_enc_len", tc.model.max_enc_len},
                  {"max_ctx_len", tc.model.max_ctx_len},
                  {"resume", tr_resume}};
    write_atomic((out_dir / "config_snapshot.json").string(),
                 snapshot.dump(2) + "\n");
    std::cout << "trained " << tc.steps << " steps; best dev JGA "
              << out.result.best_dev_jga << " at step " << out.result.best_step
              << "; outputs in " << out_dir.string() << "\n";
    return 0;
  }

  if (ev->parsed()) {
    Corpus corpus = load_corpus(ev_corpus);
    Checkpoint ckpt = load_checkpoint(ev_ckpt);
    KnowledgeBase kb;
    const bool have_kb = !ev_kb.empty();
    if (have_kb) kb = load_knowledge_base(ev_kb);
    EvalConfig ec;
    ec.use_knowledge = have_kb;
    ec.top_k = ev_top_k;
    ec.integration = ev_integration == "shuffled" ? IntegrationMode::kShuffled
                                                  : IntegrationMode::kOrdered;
    ec.shuffle_seed = ev_seed;
    EvalReport report = evaluate(corpus.dialogs, corpus.ontology,
                                 have_kb ? &kb : nullptr, ckpt.params, ec);
    const std::string out = resolve_out(ev_out);
    write_atomic(out, eval_report_to_json(report) + "\n");
    write_snapshot(out, json{{"command", "evaluate"},
                             {"corpus", ev_corpus},
                             {"kb", ev_kb},
                             {"checkpoint", ev_ckpt},
                             {"integration", ev_integration},
                             {"top_k", ev_top_k},
                             {"seed", ev_seed},
                             {"out", out}});
    std::cout << "jga " << report.jga << " precision "
              << report.retrieval_precision << " recall "
              << report.retrieval_recall << "; wrote " << out << "\n";
    return 0;
  }

  if (sc->parsed()) {
    Corpus corpus = load_corpus(sc_corpus);
    Checkpoint ckpt = load_checkpoint(sc_ckpt);
    KnowledgeBase kb = load_knowledge_base(sc_kb);
    const auto rows = sanity_check(corpus.dialogs, corpus.ontology, kb,
                                   ckpt.params, parse_recalls(sc_recalls),
                                   sc_k, sc_seed);
    const std::string out = resolve_out(sc_out);
    write_atomic(out, sanity_rows_to_csv(rows));
    write_snapshot(out, json{{"command", "sanity-check"},
                             {"corpus", sc_corpus},
                             {"kb", sc_kb},
                             {"checkpoint", sc_ckpt},
                             {"recalls", sc_recalls},
                             {"k", sc_k},
                             {"seed", sc_seed},
                             {"out", out}});
    for (const auto& r : rows) {
      std::cout << "recall_target " << r.recall_target << " measured "
                << r.measured_recall << " jga " << r.jga << "\n";
    }
    std::cout << "wrote " << out << "\n";
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}
