#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "dcc/datagen.hpp"
#include "dcc/error.hpp"
#include "dcc/eval.hpp"
#include "dcc/experiment.hpp"
#include "dcc/io.hpp"
#include "dcc/model.hpp"
#include "dcc/rng.hpp"
#include "dcc/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMemberships = "memberships.csv";
constexpr const char* kFeatures = "features.csv";
constexpr const char* kMetadata = "synth.json";

struct Global {
  std::uint64_t seed = 0;
  bool seed_given = false;
};

struct DataArgs {
  fs::path dir;
  std::optional<std::size_t> seen;
};

void add_data_args(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--data", d.dir, "Directory written by `dcc synth`")->required();
  cmd->add_option("--seen", d.seen, "Seen-sample count (defaults to the value in synth.json)");
}

dcc::GroundTruth load_data(const DataArgs& d) {
  dcc::GroundTruth gt;
  gt.m_true = dcc::read_sample_matrix_csv(d.dir / kMemberships, 'k');
  gt.features = dcc::read_sample_matrix_csv(d.dir / kFeatures, 'd');
  if (gt.m_true.cols() != gt.features.cols()) {
    throw dcc::ConfigError("memberships and features have different sample counts");
  }
  if (d.seen) {
    gt.seen_count = *d.seen;
  } else if (fs::exists(d.dir / kMetadata)) {
    gt.seen_count = json::parse(dcc::read_text_file(d.dir / kMetadata)).at("seen").get<std::size_t>();
  } else {
    gt.seen_count = gt.m_true.cols();
  }
  if (gt.seen_count == 0 || gt.seen_count > gt.m_true.cols()) {
    throw dcc::ConfigError("seen count must be in [1, N]");
  }
  return gt;
}

int cmd_synth(const Global& g, std::size_t n, std::size_t k, std::size_t seen, double noise,
              const fs::path& out) {
  dcc::SynthOptions opt;
  opt.seen_count = seen;
  opt.noise_variance = noise;
  const dcc::GroundTruth gt = dcc::synth_generate(n, k, g.seed, opt);
  dcc::write_sample_matrix_csv(out / kMemberships, gt.m_true, 'k');
  dcc::write_sample_matrix_csv(out / kFeatures, gt.features, 'd');
  const json meta{{"n", n},
                  {"k", k},
                  {"seen", gt.seen_count},
                  {"noise_variance", noise},
                  {"seed", g.seed},
                  {"rng_algorithm", std::string(dcc::Rng::kAlgorithm)},
                  {"library_version", dcc::kLibraryVersion}};
  dcc::write_text_file(out / kMetadata, meta.dump(2) + "\n");
  std::cout << "wrote " << n << " samples (" << gt.seen_count << " seen) to " << out.string() << "\n";
  return 0;
}

int cmd_annotate(const Global& g, const DataArgs& d, const std::string& mode, std::size_t m,
                 const fs::path& confusion, const fs::path& labels_path, const fs::path& out) {
  if (!confusion.empty() && mode != "confusion") {
    throw dcc::ConfigError("--confusion is only valid with --mode confusion");
  }
  if (!labels_path.empty() && mode != "machine") {
    throw dcc::ConfigError("--labels is only valid with --mode machine");
  }
  const dcc::GroundTruth gt = load_data(d);
  const std::size_t k = gt.num_clusters();
  dcc::AnnotationSet ann;
  if (mode == "clean") {
    ann = dcc::sample_annotations(gt, m, dcc::Matrix::identity(k), g.seed);
  } else if (mode == "confusion") {
    const dcc::ConfusionMatrix a = confusion.empty()
                                       ? dcc::default_confusion_k3()
                                       : dcc::ConfusionMatrix(dcc::read_plain_matrix_csv(confusion));
    if (a.size() != k) throw dcc::ConfigError("confusion matrix is not K x K");
    ann = dcc::sample_annotations(gt, m, a.gram(), g.seed);
  } else if (mode == "machine") {
    std::vector<std::size_t> labels;
    if (labels_path.empty()) {
      labels = dcc::kmeans_reference(gt.seen_features(), k, g.seed).labels;
    } else {
      const dcc::CsvTable t = dcc::read_csv(labels_path);
      const std::size_t col = t.column("label");
      for (const auto& row : t.rows) labels.push_back(std::stoull(row.at(col)));
      if (labels.size() != gt.seen_count) {
        throw dcc::ConfigError("label file must hold one label per seen sample");
      }
    }
    ann = dcc::machine_annotate(labels, m, g.seed);
  } else {
    throw dcc::ConfigError("unknown annotation mode '" + mode + "'");
  }
  dcc::write_annotations_csv(out, ann);
  std::printf("noise_level=%.1f%%\n", 100.0 * dcc::annotation_error_rate(ann, gt));
  return 0;
}

struct TrainArgs {
  fs::path annotations;
  fs::path config;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
  bool vanilla = false;
  double holdout = 0.0;
  fs::path checkpoint;
  fs::path log;
};

int cmd_train(const Global& g, const DataArgs& d, const TrainArgs& a) {
  const dcc::GroundTruth gt = load_data(d);
  dcc::TrainConfig cfg;
  if (!a.config.empty()) cfg = dcc::train_config_from_json(dcc::read_text_file(a.config));
  cfg.num_clusters = gt.num_clusters();
  if (g.seed_given) cfg.seed = g.seed;
  if (a.lambda) cfg.lambda = *a.lambda;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.vanilla) {
    cfg.learn_b = false;
    cfg.lambda = 0.0;
  }
  const dcc::AnnotationSet ann = dcc::read_annotations_csv(a.annotations, gt.seen_count);
  const dcc::AnnotationSplit split = dcc::split_annotations(ann, a.holdout, cfg.seed);
  const bool has_val = !split.validation.triplets.empty();
  const dcc::TrainResult r =
      dcc::train(gt.seen_features(), split.train, cfg, has_val ? &split.validation : nullptr);
  dcc::save_checkpoint(a.checkpoint, r.params);
  if (!a.log.empty()) dcc::write_train_log_csv(a.log, r.log);
  std::printf("epochs=%zu final_cc=%s", r.log.epochs.size(),
              dcc::format_double(r.log.epochs.back().cc).c_str());
  if (r.validation_cc) std::printf(" validation_cc=%s", dcc::format_double(*r.validation_cc).c_str());
  std::printf("\n");
  return 0;
}

int cmd_eval(const Global& g, const DataArgs& d, const fs::path& checkpoint, const fs::path& out,
             std::size_t ssc_directions) {
  const dcc::GroundTruth gt = load_data(d);
  const dcc::MlpParams params = dcc::load_checkpoint(checkpoint);
  dcc::EvalOptions opt;
  opt.ssc_seed = g.seed;
  opt.ssc_directions = ssc_directions;
  const dcc::EvalReport rep = dcc::evaluate_model(params, gt, opt);
  dcc::CsvTable t;
  t.header = dcc::eval_report_csv_header();
  t.rows.push_back(dcc::eval_report_csv_row(rep));
  dcc::write_csv(out, t);
  fs::path sidecar = out;
  sidecar.replace_extension(".json");
  dcc::write_text_file(sidecar, dcc::eval_report_json(rep) + "\n");
  std::printf("mse_seen=%s acc_seen=%s\n", dcc::format_double(rep.seen.mse).c_str(),
              dcc::format_double(rep.seen.clustering.acc).c_str());
  return 0;
}

int cmd_experiment(const Global& g, const fs::path& spec_path, std::optional<std::size_t> workers,
                   const fs::path& output_dir, bool quiet) {
  dcc::ExperimentSpec spec = dcc::experiment_spec_from_json(dcc::read_text_file(spec_path));
  if (g.seed_given) spec.seeds = {g.seed};
  if (workers) spec.workers = *workers;
  if (!output_dir.empty()) spec.output_dir = output_dir;
  dcc::ProgressFn progress;
  if (!quiet) progress = [](const std::string& line) { std::cerr << line << "\n"; };
  const dcc::ExperimentOutcome out = dcc::run_experiment(spec, progress);
  std::size_t failed = 0;
  for (const auto& r : out.table.rows) failed += !r.ok();
  std::printf("cells=%zu run=%zu skipped=%zu failed=%zu output=%s\n", out.table.rows.size(),
              out.cells_run, out.cells_skipped, failed, spec.output_dir.string().c_str());
  return 0;
}

void print_error(std::string_view kind, std::string_view message) {
  std::string flat(message);
  for (char& c : flat)
    if (c == '\n') c = ' ';
  std::cerr << "error: kind=" << kind << " message=" << flat << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep constrained clustering from pairwise annotations"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->each([&](const std::string&) {
    g.seed_given = true;
  });

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::size_t n = 2000, k = 3, seen = 1000;
  double noise = 0.1;
  fs::path synth_out;
  synth->add_option("--n", n, "Number of samples")->capture_default_str();
  synth->add_option("--k", k, "Number of clusters")->capture_default_str();
  synth->add_option("--seen", seen, "Seen samples (the rest are unseen)")->capture_default_str();
  synth->add_option("--noise-variance", noise, "Membership noise variance")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* annotate = app.add_subcommand("annotate", "Sample pairwise annotations");
  DataArgs ann_data;
  std::string mode = "clean";
  std::size_t m = 10000;
  fs::path confusion, labels, ann_out;
  add_data_args(annotate, ann_data);
  annotate->add_option("--mode", mode, "clean, confusion or machine")
      ->check(CLI::IsMember({"clean", "confusion", "machine"}))
      ->capture_default_str();
  annotate->add_option("--m", m, "Number of annotations")->capture_default_str();
  annotate->add_option("--confusion", confusion, "Column-stochastic K x K CSV (confusion mode)");
  annotate->add_option("--labels", labels, "CSV with a 'label' column (machine mode)");
  annotate->add_option("--out", ann_out, "Output triplet CSV")->required();

  auto* train = app.add_subcommand("train", "Train a clustering network");
  DataArgs train_data;
  TrainArgs ta;
  add_data_args(train, train_data);
  train->add_option("--annotations", ta.annotations, "Triplet CSV")->required();
  train->add_option("--config", ta.config, "JSON training config");
  train->add_option("--lambda", ta.lambda, "Volume regularization weight");
  train->add_option("--epochs", ta.epochs, "Training epochs");
  train->add_flag("--vanilla", ta.vanilla, "Fix B to the identity and drop the volume term");
  train->add_option("--holdout", ta.holdout, "Fraction of annotations held out for validation")
      ->capture_default_str();
  train->add_option("--checkpoint", ta.checkpoint, "Output checkpoint")->required();
  train->add_option("--log", ta.log, "Output per-epoch CSV log");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against ground truth");
  DataArgs eval_data;
  fs::path ckpt, eval_out;
  std::size_t ssc_directions = 200;
  add_data_args(eval, eval_data);
  eval->add_option("--checkpoint", ckpt, "Checkpoint to load")->required();
  eval->add_option("--out", eval_out, "Report CSV (a .json sidecar is written next to it)")->required();
  eval->add_option("--ssc-directions", ssc_directions, "Directions for the sampled SSC check")
      ->capture_default_str();

  auto* experiment = app.add_subcommand("experiment", "Run a resumable sweep from a JSON spec");
  fs::path spec_path, exp_out;
  std::optional<std::size_t> workers;
  bool quiet = false;
  experiment->add_option("--spec", spec_path, "Experiment spec JSON")->required();
  experiment->add_option("--workers", workers, "Parallel cells");
  experiment->add_option("--output-dir", exp_out, "Override the spec's output directory");
  experiment->add_flag("--quiet", quiet, "No per-cell progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*synth) return cmd_synth(g, n, k, seen, noise, synth_out);
    if (*annotate) return cmd_annotate(g, ann_data, mode, m, confusion, labels, ann_out);
    if (*train) return cmd_train(g, train_data, ta);
    if (*eval) return cmd_eval(g, eval_data, ckpt, eval_out, ssc_directions);
    if (*experiment) return cmd_experiment(g, spec_path, workers, exp_out, quiet);
  } catch (const dcc::Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const json::exception& e) {
    print_error("data", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 1;
}
