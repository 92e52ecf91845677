#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcc/datagen.hpp"
#include "dcc/eval.hpp"
#include "dcc/train.hpp"

namespace dcc {

inline constexpr const char* kLibraryVersion = "0.1.0";

// TrainConfig <-> JSON object. Missing keys keep the values in `base`;
// unknown keys are rejected.
TrainConfig train_config_from_json(const std::string& json_text, const TrainConfig& base = {});
std::string train_config_to_json(const TrainConfig& cfg);

struct DatasetSpec {
  enum class Source { kSynthetic, kFiles };
  Source source = Source::kSynthetic;
  std::size_t n = 2000;
  std::size_t k = 3;
  std::size_t seen = 1000;
  double noise_variance = 0.1;
  std::filesystem::path memberships_path;
  std::filesystem::path features_path;
};

struct AnnotationSpec {
  // clean: B = I; confusion: B = AᵀA; machine: labels from a K-means
  // annotator over the seen features; file: the first M triplets of a file.
  enum class Mode { kClean, kConfusion, kMachine, kFile };
  Mode mode = Mode::kClean;
  std::filesystem::path confusion_path;  // empty means the built-in K = 3 matrix
  std::filesystem::path file_path;
  double holdout_fraction = 0.1;
};

struct ExperimentSpec {
  std::string name = "experiment";
  DatasetSpec dataset;
  AnnotationSpec annotations;
  std::vector<std::size_t> m_grid;
  std::vector<std::uint64_t> seeds;
  // "vanilla" (B = I, λ = 0) and/or "volmax" (learned B, one cell per λ in
  // train.lambda_grid).
  std::vector<std::string> methods{"vanilla", "volmax"};
  TrainConfig train;
  EvalOptions eval;
  std::filesystem::path output_dir = "experiment_out";
  std::size_t workers = 1;

  // Throws ConfigError on an empty grid, no seeds, an unknown method, or a
  // missing input file.
  void validate() const;
};

ExperimentSpec experiment_spec_from_json(const std::string& json_text);
std::string experiment_spec_to_json(const ExperimentSpec& spec);

struct ResultRow {
  std::string method;  // "vanilla" or "volmax"
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::string status = "ok";  // "ok" or "error"
  std::string error;
  double noise_level = 0.0;
  std::size_t train_pairs = 0;
  std::size_t epochs_run = 0;
  double validation_cc = 0.0;
  double mse_seen = 0.0;
  double mse_unseen = 0.0;
  double acc_seen = 0.0, nmi_seen = 0.0, ari_seen = 0.0;
  double acc_unseen = 0.0, nmi_unseen = 0.0, ari_unseen = 0.0;
  double gram_logdet = 0.0;
  bool asc_satisfied = false;
  std::string ssc_verdict;
  double seconds = 0.0;

  std::string key() const;
  bool ok() const { return status == "ok"; }
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

std::vector<std::string> result_table_header();
void write_result_table_csv(const std::filesystem::path& path, const ResultTable& table);
ResultTable read_result_table_csv(const std::filesystem::path& path);

struct CurvePoint {
  std::size_t m = 0;
  std::string method;  // vanilla, volmax_lambda=<λ>, volmax_selected
  std::string split;   // seen or unseen
  double median = 0.0;
  double mean = 0.0;
  double std = 0.0;    // sample standard deviation; 0 for a single seed
  std::size_t count = 0;
};

// Per (M, method, split) MSE statistics over seeds. volmax_selected picks, per
// (M, seed), the λ with the smallest validation cc loss.
std::vector<CurvePoint> aggregate_curves(const ResultTable& table);
void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curves);
std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path);

double median_of(std::vector<double> values);

struct ExperimentOutcome {
  ResultTable table;
  std::vector<CurvePoint> curves;
  std::size_t cells_run = 0;
  std::size_t cells_skipped = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

// Full factorial over (M, seed, method/λ). Completed cells are appended to
// <output_dir>/manifest.jsonl and skipped on rerun. Writes results.csv,
// mse_vs_M.csv and run_metadata.json to the output directory.
ExperimentOutcome run_experiment(const ExperimentSpec& spec, const ProgressFn& progress = {});

// Git blob id (SHA-1 of "blob <len>\0" + content).
std::string git_blob_hash(const std::string& content);

}  // namespace dcc
