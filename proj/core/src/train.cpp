#include "dcc/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "dcc/error.hpp"
#include "dcc/io.hpp"
#include "dcc/rng.hpp"

namespace dcc {

namespace {

Matrix gather_columns(const Matrix& features, std::span<const Annotation> batch) {
  const std::size_t n = batch.size();
  Matrix x(features.rows(), 2 * n);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto src = features.row(r);
    auto dst = x.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      dst[c] = src[batch[c].i];
      dst[n + c] = src[batch[c].j];
    }
  }
  return x;
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

void apply_update(MlpParams& params, const MlpGradients& g, const TrainConfig& cfg) {
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    add_scaled(params.weights[l], g.weights[l], -cfg.lr_theta);
    auto& b = params.biases[l];
    for (std::size_t r = 0; r < b.size(); ++r) b[r] -= cfg.lr_theta * g.biases[l][r];
  }
  if (cfg.learn_b) add_scaled(params.b_logits, g.b_logits, -cfg.lr_bprime);
}

void accumulate(MlpGradients& dst, const MlpGradients& src) {
  for (std::size_t l = 0; l < dst.weights.size(); ++l) {
    add_scaled(dst.weights[l], src.weights[l], 1.0);
    for (std::size_t r = 0; r < dst.biases[l].size(); ++r) dst.biases[l][r] += src.biases[l][r];
  }
}

}  // namespace

std::vector<std::size_t> TrainConfig::layer_dims(std::size_t input_dim) const {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(num_clusters);
  return dims;
}

void TrainConfig::validate() const {
  const std::size_t k = num_clusters;
  if (k < 2) throw ConfigError("num_clusters must be at least 2");
  if (!(lr_theta > 0.0) || !(lr_bprime > 0.0)) throw ConfigError("learning rates must be positive");
  if (batch_pairs == 0) throw ConfigError("batch_pairs must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(clamp > 0.0 && clamp < 0.5)) throw ConfigError("clamp must lie in (0, 0.5)");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be nonnegative");
  if (!(init_gain > 0.0)) throw ConfigError("init_gain must be positive");
  if (std::any_of(hidden.begin(), hidden.end(), [](std::size_t h) { return h == 0; })) {
    throw ConfigError("hidden widths must be positive");
  }
  // A minibatch block of 2·batch_pairs columns needs at least K for a full-rank Gram.
  if (lambda > 0.0 && !vol_on_full_matrix && 2 * batch_pairs < k) {
    throw ConfigError("batch_pairs too small for the minibatch volume term");
  }
  for (double l : lambda_grid)
    if (!(l >= 0.0)) throw ConfigError("lambda_grid entries must be nonnegative");
}

bool TrainLog::same_trajectory(const TrainLog& other) const {
  if (epochs.size() != other.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || a.cc != b.cc || a.vol != b.vol || a.clamp_hits != b.clamp_hits ||
        a.validation_cc != b.validation_cc) {
      return false;
    }
  }
  return true;
}

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  CsvTable t;
  t.header = {"epoch", "cc", "vol", "clamp_hits", "seconds"};
  for (const auto& e : log.epochs) {
    t.rows.push_back({std::to_string(e.epoch), format_double(e.cc), format_double(e.vol),
                      std::to_string(e.clamp_hits), format_double(e.seconds)});
  }
  write_csv(path, t);
}

TrainLog read_train_log_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ce = t.column("epoch"), cc = t.column("cc"), cv = t.column("vol"),
                    ch = t.column("clamp_hits"), cs = t.column("seconds");
  TrainLog log;
  for (const auto& r : t.rows) {
    EpochRecord e;
    e.epoch = std::stoul(r[ce]);
    e.cc = parse_double(r[cc]);
    e.vol = parse_double(r[cv]);
    e.clamp_hits = std::stoul(r[ch]);
    e.seconds = parse_double(r[cs]);
    log.epochs.push_back(e);
  }
  return log;
}

Matrix effective_b(const MlpParams& params, const TrainConfig& cfg) {
  if (!cfg.learn_b) return Matrix::identity(params.num_clusters());
  return b_matrix(params).b;
}

LossAndGradients compute_loss_and_gradients(const MlpParams& params, const Matrix& features,
                                            std::span<const Annotation> batch,
                                            const TrainConfig& cfg) {
  const std::size_t n = batch.size();
  const std::size_t k = params.num_clusters();
  const Matrix x = gather_columns(features, batch);
  auto [m, tape] = forward(params, x);

  PairBatch pb;
  pb.left = GroundTruth::columns(m, 0, n);
  pb.right = GroundTruth::columns(m, n, 2 * n);
  pb.labels.reserve(n);
  for (const auto& a : batch) pb.labels.push_back(a.y);

  const BMatrix bm = b_matrix(params);
  const Matrix b = cfg.learn_b ? bm.b : Matrix::identity(k);
  CcLoss cc = loss_cc(pb, b, cfg.clamp);

  Matrix grad_m(k, 2 * n);
  for (std::size_t r = 0; r < k; ++r) {
    auto dst = grad_m.row(r);
    const auto gl = cc.grad_left.row(r);
    const auto gr = cc.grad_right.row(r);
    std::copy(gl.begin(), gl.end(), dst.begin());
    std::copy(gr.begin(), gr.end(), dst.begin() + static_cast<std::ptrdiff_t>(n));
  }

  LossAndGradients out;
  out.loss.cc = cc.value;
  out.loss.clamp_hits = cc.clamp_hits;

  if (cfg.lambda > 0.0 && !cfg.vol_on_full_matrix && 2 * n >= k) {
    VolLoss vol = loss_vol(m, cfg.lambda, cfg.ridge);
    out.loss.vol = vol.value;
    add_scaled(grad_m, vol.grad, 1.0);
  }

  out.grads = backward(params, tape, grad_m);

  if (cfg.lambda > 0.0 && cfg.vol_on_full_matrix) {
    auto [m_full, tape_full] = forward(params, features);
    VolLoss vol = loss_vol(m_full, cfg.lambda, cfg.ridge);
    out.loss.vol = vol.value;
    accumulate(out.grads, backward(params, tape_full, vol.grad));
  }

  if (cfg.learn_b) out.grads.b_logits = grad_bprime(cc.grad_b, bm.b);
  out.loss.total = out.loss.cc + out.loss.vol;
  return out;
}

LossValue sgd_step(MlpParams& params, const Matrix& features, std::span<const Annotation> batch,
                   const TrainConfig& cfg) {
  LossAndGradients lg = compute_loss_and_gradients(params, features, batch, cfg);
  apply_update(params, lg.grads, cfg);
  return lg.loss;
}

double evaluate_cc(const MlpParams& params, const Matrix& features, const AnnotationSet& ann,
                   const TrainConfig& cfg) {
  if (ann.triplets.empty()) return 0.0;
  const Matrix b = effective_b(params, cfg);
  constexpr std::size_t kChunk = 2048;
  double total = 0.0;
  const std::span<const Annotation> all(ann.triplets);
  for (std::size_t start = 0; start < all.size(); start += kChunk) {
    const auto chunk = all.subspan(start, std::min(kChunk, all.size() - start));
    const Matrix x = gather_columns(features, chunk);
    const Matrix m = forward(params, x).first;
    PairBatch pb;
    pb.left = GroundTruth::columns(m, 0, chunk.size());
    pb.right = GroundTruth::columns(m, chunk.size(), 2 * chunk.size());
    for (const auto& a : chunk) pb.labels.push_back(a.y);
    total += loss_cc(pb, b, cfg.clamp).value * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(ann.triplets.size());
}

TrainResult train(const Matrix& features, const AnnotationSet& ann, const TrainConfig& cfg,
                  const AnnotationSet* validation) {
  cfg.validate();
  ann.validate();
  if (ann.triplets.empty()) throw ConfigError("train: no annotations");
  if (ann.n > features.cols()) throw ConfigError("annotation indices exceed the feature count");
  if (validation != nullptr) {
    validation->validate();
    if (validation->n > features.cols()) throw ConfigError("validation indices exceed features");
  }

  const auto dims = cfg.layer_dims(features.rows());
  TrainResult res;
  res.params = init_params(dims, cfg.seed, cfg.init_gain);

  std::vector<Annotation> order = ann.triplets;
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  const bool early_stop = cfg.early_stop && validation != nullptr && !validation->triplets.empty();
  std::optional<MlpParams> best_params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  using clock = std::chrono::steady_clock;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = clock::now();
    shuffle_rng.shuffle(std::span<Annotation>(order));
    double cc_sum = 0.0;
    double vol_sum = 0.0;
    std::size_t batches = 0;
    std::size_t hits = 0;
    const std::span<const Annotation> all(order);
    for (std::size_t start = 0; start < all.size(); start += cfg.batch_pairs) {
      const auto batch = all.subspan(start, std::min(cfg.batch_pairs, all.size() - start));
      const LossValue lv = sgd_step(res.params, features, batch, cfg);
      ++res.steps;
      if (!std::isfinite(lv.total)) throw DivergenceError("non-finite loss", res.steps);
      if (!res.params.all_finite()) throw DivergenceError("non-finite parameters", res.steps);
      cc_sum += lv.cc * static_cast<double>(batch.size());
      vol_sum += lv.vol;
      hits += lv.clamp_hits;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.cc = cc_sum / static_cast<double>(all.size());
    rec.vol = vol_sum / static_cast<double>(batches);
    rec.clamp_hits = hits;
    if (validation != nullptr && !validation->triplets.empty()) {
      rec.validation_cc = evaluate_cc(res.params, features, *validation, cfg);
    }
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    res.log.epochs.push_back(rec);

    if (early_stop) {
      if (*rec.validation_cc < best_val) {
        best_val = *rec.validation_cc;
        best_params = res.params;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  if (best_params) res.params = std::move(*best_params);
  if (validation != nullptr && !validation->triplets.empty()) {
    res.validation_cc = early_stop ? best_val : evaluate_cc(res.params, features, *validation, cfg);
  }
  return res;
}

std::optional<std::size_t> pick_lambda(std::span<const double> lambdas,
                                       std::span<const std::optional<double>> validation_cc) {
  if (lambdas.size() != validation_cc.size()) throw ShapeError("pick_lambda: length mismatch");
  std::vector<std::size_t> idx(lambdas.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return lambdas[a] < lambdas[b]; });
  std::optional<std::size_t> best;
  for (std::size_t i : idx) {
    if (!validation_cc[i]) continue;
    if (!best || *validation_cc[i] < *validation_cc[*best]) best = i;
  }
  return best;
}

LambdaSelection select_lambda(const Matrix& features, const AnnotationSet& ann,
                              const TrainConfig& cfg, const AnnotationSet& validation,
                              std::size_t workers) {
  if (cfg.lambda_grid.empty()) throw ConfigError("select_lambda: empty lambda grid");
  if (validation.triplets.empty()) throw ConfigError("select_lambda: empty validation set");

  LambdaSelection sel;
  sel.results.resize(cfg.lambda_grid.size());
  auto run_one = [&](std::size_t idx) {
    LambdaResult& r = sel.results[idx];
    r.lambda = cfg.lambda_grid[idx];
    TrainConfig c = cfg;
    c.lambda = r.lambda;
    try {
      r.result = train(features, ann, c, &validation);
      r.validation_cc = *r.result.validation_cc;
      r.ok = true;
    } catch (const DivergenceError& e) {
      r.error = e.what();
    } catch (const SingularityError& e) {
      r.error = e.what();
    }
  };

  workers = std::max<std::size_t>(1, std::min(workers, cfg.lambda_grid.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < cfg.lambda_grid.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cfg.lambda_grid.size();) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<std::optional<double>> vals;
  for (const auto& r : sel.results) vals.push_back(r.ok ? std::optional(r.validation_cc) : std::nullopt);
  const auto best = pick_lambda(cfg.lambda_grid, vals);
  if (!best) throw DivergenceError("every lambda in the grid failed", 0);
  sel.best_index = *best;
  sel.best_lambda = sel.results[sel.best_index].lambda;
  return sel;
}

}  // namespace dcc
