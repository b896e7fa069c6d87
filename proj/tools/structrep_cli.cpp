// structrep: synthesize corpora, train the structural encoder, embed, evaluate.
//
// Exit codes: 0 success, 2 usage or validation error, 3 numerical failure,
// 1 anything unexpected. Options may also come from a TOML file given with
// --config (sections named after the subcommand); command-line flags win.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "structrep/corpus.hpp"
#include "structrep/evalmetrics.hpp"
#include "structrep/pipeline.hpp"
#include "structrep/trainer.hpp"

namespace fs = std::filesystem;
using namespace structrep;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct SynthArgs {
  CorpusConfig corpus;
  fs::path out;
};

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  TrainConfig train;
  EncoderConfig encoder;
  int log_every = 100;
};

struct EmbedArgs {
  fs::path checkpoint;
  fs::path manifest;
  std::string split;
  std::string method;
  fs::path out;
};

struct EvalArgs {
  fs::path queries;
  fs::path gallery;
  fs::path manifest;
  fs::path out;
};

// Accepts either the manifest file or the corpus directory holding it.
fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.jsonl" : p; }

int run_synth(const SynthArgs& a) {
  const Manifest m = generate_corpus(a.corpus, a.out);
  double sum = 0.0;
  int n = 0;
  for (const auto& row : m.rows) {
    if (row.split == "distractor") continue;
    sum += row.overlap;
    ++n;
  }
  std::printf("pairs %d (train %d, test %d), distractors %d, mean overlap %.4f\n", n, a.corpus.n_pairs,
              a.corpus.n_test_pairs, a.corpus.n_distractors, n ? sum / n : 0.0);
  std::printf("manifest %s\n", (a.out / "manifest.jsonl").string().c_str());
  return 0;
}

int run_train(const TrainArgs& a) {
  a.train.validate();
  a.encoder.validate();
  const Manifest m = read_manifest(manifest_path(a.manifest));
  const auto pairs = load_train_pairs(m);
  if (pairs.empty()) throw ValidationError("manifest has no training pairs");
  for (const auto& [src, syn] : pairs) {
    if (src.height != a.encoder.canvas_height || src.width != a.encoder.canvas_width) {
      throw ValidationError("corpus images are " + std::to_string(src.height) + "x" + std::to_string(src.width) +
                            " but the encoder canvas is " + std::to_string(a.encoder.canvas_height) + "x" +
                            std::to_string(a.encoder.canvas_width));
    }
  }
  fs::create_directories(a.out);
  const TrainResult r = train(pairs, a.encoder, a.train, [&](const StepRecord& s) {
    if (a.log_every > 0 && (s.step % a.log_every == 0 || s.step + 1 == a.train.total_steps)) {
      std::printf("step %5ld  loss %.4f  lr %.3g  pos %.3f  neg %.3f\n", s.step, s.loss, s.lr, s.pos_sim,
                  s.neg_sim);
      std::fflush(stdout);
    }
  });
  save_checkpoint(a.out / "checkpoint.bin", r.params);
  write_train_report(a.out / "train_report.jsonl", r.report, a.train);
  std::printf("checkpoint %s\n", (a.out / "checkpoint.bin").string().c_str());
  return 0;
}

void require_nonempty(const std::vector<SplitEntry>& entries, const std::string& split) {
  if (entries.empty()) throw ValidationError("split '" + split + "' is empty");
}

int run_embed(const EmbedArgs& a) {
  const EncoderParams params = load_checkpoint(a.checkpoint);
  const Manifest m = read_manifest(manifest_path(a.manifest));
  const auto entries = select_split(m, a.split);
  require_nonempty(entries, a.split);
  const EmbeddingSet set = embed_split(params, m, entries);
  write_embeddings(a.out, set);
  std::printf("embedded %zu images (dim %td) -> %s\n", set.size(), set.vectors.cols(), a.out.string().c_str());
  return 0;
}

int run_baseline_embed(const EmbedArgs& a) {
  const BaselineMethod method = baseline_method_from_string(a.method);
  const Manifest m = read_manifest(manifest_path(a.manifest));
  const auto entries = select_split(m, a.split);
  require_nonempty(entries, a.split);
  const EmbeddingSet set = baseline_embed_split(m, entries, method);
  write_embeddings(a.out, set);
  std::printf("embedded %zu images with %s (dim %td) -> %s\n", set.size(), a.method.c_str(), set.vectors.cols(),
              a.out.string().c_str());
  return 0;
}

int run_eval(const EvalArgs& a) {
  const EmbeddingSet queries = read_embeddings(a.queries);
  const EmbeddingSet gallery = read_embeddings(a.gallery);
  const GroundTruth truth = test_truth(read_manifest(manifest_path(a.manifest)));
  const Evaluation ev = evaluate(queries, gallery, truth);
  fs::create_directories(a.out);
  write_metrics_report(a.out / "metrics.json", ev.report);
  write_pr_curve(a.out / "pr_curve.tsv", ev.curve);
  std::printf("queries %zu  gallery %zu  ground truth %zu  predictions %zu\n", ev.report.n_queries,
              ev.report.n_gallery, ev.report.n_ground_truth, ev.report.n_predictions);
  std::printf("uAP %.4f", ev.report.micro_ap);
  for (const auto& [k, v] : ev.report.map_at) std::printf("  mAP@%zu %.4f", k, v);
  std::printf("\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural-similarity retrieval on synthetic scenes"};
  app.set_config("--config", "", "TOML file with default option values; flags override it");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a corpus of structure-sharing image pairs");
  cmd_synth->add_option("--pairs", synth.corpus.n_pairs, "Training pairs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_synth->add_option("--test-pairs", synth.corpus.n_test_pairs, "Held-out pairs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd_synth->add_option("--distractors", synth.corpus.n_distractors, "Unrelated gallery images")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd_synth->add_option("--jitter", synth.corpus.pair.jitter, "Structural jitter bound")
      ->check(CLI::Range(0.0, kMaxJitter))
      ->capture_default_str();
  cmd_synth->add_option("--seed", synth.corpus.seed, "Corpus seed")->required();
  cmd_synth->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train the encoder on a corpus's training pairs");
  cmd_train->add_option("--manifest,--data", tr.manifest, "Corpus manifest or directory")->required();
  cmd_train->add_option("--out", tr.out, "Output directory for checkpoint.bin and train_report.jsonl")->required();
  cmd_train->add_option("--seed", tr.train.seed, "Training seed")->required();
  cmd_train->add_option("--steps", tr.train.total_steps)->check(CLI::PositiveNumber)->capture_default_str();
  cmd_train->add_option("--batch-size", tr.train.batch_size)->check(CLI::Range(2, 1 << 20))->capture_default_str();
  cmd_train->add_option("--lr", tr.train.base_lr)->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd_train->add_option("--temperature", tr.train.temperature)->check(CLI::PositiveNumber)->capture_default_str();
  cmd_train->add_option("--weight-decay", tr.train.weight_decay)->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd_train->add_option("--momentum", tr.train.momentum)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd_train->add_option("--patch-size", tr.encoder.patch_size)->capture_default_str();
  cmd_train->add_option("--backbone-dim", tr.encoder.backbone_dim)->capture_default_str();
  cmd_train->add_option("--hidden-dim", tr.encoder.hidden_dim)->capture_default_str();
  cmd_train->add_option("--embed-dim", tr.encoder.embed_dim)->capture_default_str();
  cmd_train->add_option("--rank", tr.encoder.adapter_rank)->capture_default_str();
  cmd_train->add_option("--alpha", tr.encoder.adapter_scale)->capture_default_str();
  cmd_train->add_option("--log-every", tr.log_every, "Progress line interval; 0 silences")->capture_default_str();

  EmbedArgs emb;
  auto* cmd_embed = app.add_subcommand("embed", "Embed a corpus split with a trained checkpoint");
  cmd_embed->add_option("--checkpoint", emb.checkpoint)->required();
  cmd_embed->add_option("--manifest,--data", emb.manifest, "Corpus manifest or directory")->required();
  cmd_embed->add_option("--split", emb.split)
      ->required()
      ->check(CLI::IsMember({"train", "test-query", "test-gallery", "distractor"}));
  cmd_embed->add_option("--out", emb.out, "Embedding file")->required();

  EmbedArgs base;
  auto* cmd_base = app.add_subcommand("baseline-embed", "Embed a corpus split with a reference method");
  cmd_base->add_option("--manifest,--data", base.manifest, "Corpus manifest or directory")->required();
  cmd_base->add_option("--split", base.split)
      ->required()
      ->check(CLI::IsMember({"train", "test-query", "test-gallery", "distractor"}));
  cmd_base->add_option("--method", base.method)->required()->check(CLI::IsMember({"color_hist", "depth_oracle"}));
  cmd_base->add_option("--out", base.out, "Embedding file")->required();

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "Score query embeddings against a gallery");
  cmd_eval->add_option("--queries", ev.queries)->required();
  cmd_eval->add_option("--gallery", ev.gallery)->required();
  cmd_eval->add_option("--manifest,--data", ev.manifest, "Corpus whose held-out pairs define the truth")->required();
  cmd_eval->add_option("--out", ev.out, "Output directory for metrics.json and pr_curve.tsv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*cmd_synth) return run_synth(synth);
    if (*cmd_train) return run_train(tr);
    if (*cmd_embed) return run_embed(emb);
    if (*cmd_base) return run_baseline_embed(base);
    if (*cmd_eval) return run_eval(ev);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {  // config, shape, validation, build errors
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "unexpected failure: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
