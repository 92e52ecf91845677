#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcc/datagen.hpp"
#include "dcc/linalg.hpp"
#include "dcc/loss.hpp"
#include "dcc/model.hpp"

namespace dcc {

// Candidate λ values for model selection.
inline const std::vector<double> kDefaultLambdaGrid{0.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5};

struct TrainConfig {
  std::size_t num_clusters = 3;
  std::vector<std::size_t> hidden{64, 64};
  double init_gain = 1.0;
  double lr_theta = 0.5;
  double lr_bprime = 0.1;
  std::size_t batch_pairs = 128;
  std::size_t epochs = 200;
  double lambda = 0.0;
  double clamp = kDefaultClamp;
  double ridge = kDefaultRidge;
  std::uint64_t seed = 0;
  // false pins B to the identity (plain logistic pair loss).
  bool learn_b = true;
  // Volume term over every training sample instead of the minibatch block.
  bool vol_on_full_matrix = false;
  std::vector<double> lambda_grid = kDefaultLambdaGrid;
  // Early stopping on validation cc loss; only active when a validation set is given.
  bool early_stop = false;
  std::size_t patience = 20;

  std::vector<std::size_t> layer_dims(std::size_t input_dim) const;
  // Throws ConfigError on an invalid combination.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double cc = 0.0;
  double vol = 0.0;
  std::size_t clamp_hits = 0;
  double seconds = 0.0;
  std::optional<double> validation_cc;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  // Equality on everything except wall-clock time.
  bool same_trajectory(const TrainLog& other) const;
};

// CSV "epoch,cc,vol,clamp_hits,seconds".
void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log);
TrainLog read_train_log_csv(const std::filesystem::path& path);

struct TrainResult {
  MlpParams params;
  TrainLog log;
  std::size_t steps = 0;
  std::optional<double> validation_cc;  // of the returned parameters
};

// Effective B: sigmoid(B′) when learning B, identity otherwise.
Matrix effective_b(const MlpParams& params, const TrainConfig& cfg);

struct LossAndGradients {
  LossValue loss;
  MlpGradients grads;
};

// Loss'_cc + Loss_vol on one minibatch of annotations and gradients for every
// parameter (B′ included when cfg.learn_b).
LossAndGradients compute_loss_and_gradients(const MlpParams& params, const Matrix& features,
                                            std::span<const Annotation> batch,
                                            const TrainConfig& cfg);

// One plain SGD update; returns the pre-update loss.
LossValue sgd_step(MlpParams& params, const Matrix& features, std::span<const Annotation> batch,
                   const TrainConfig& cfg);

// Mean cc loss of `ann` under the current parameters.
double evaluate_cc(const MlpParams& params, const Matrix& features, const AnnotationSet& ann,
                   const TrainConfig& cfg);

// Minibatch SGD over shuffled annotations. `features` holds the samples the
// annotation indices refer to (D × n). Throws DivergenceError on NaN/Inf.
TrainResult train(const Matrix& features, const AnnotationSet& ann, const TrainConfig& cfg,
                  const AnnotationSet* validation = nullptr);

struct LambdaResult {
  double lambda = 0.0;
  bool ok = false;
  std::string error;
  double validation_cc = 0.0;
  TrainResult result;
};

struct LambdaSelection {
  double best_lambda = 0.0;
  std::size_t best_index = 0;
  std::vector<LambdaResult> results;  // grid order
};

// Index of the smallest validation loss among entries that have one, visiting
// in ascending λ so exact ties go to the smaller λ.
std::optional<std::size_t> pick_lambda(std::span<const double> lambdas,
                                       std::span<const std::optional<double>> validation_cc);

// Trains one model per grid λ and keeps the smallest validation cc loss, ties
// going to the smaller λ. A diverged λ is recorded and skipped; throws only if
// every λ fails.
LambdaSelection select_lambda(const Matrix& features, const AnnotationSet& ann,
                              const TrainConfig& cfg, const AnnotationSet& validation,
                              std::size_t workers = 1);

}  // namespace dcc
