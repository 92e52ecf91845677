#include "dcc/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcc/error.hpp"
#include "dcc/rng.hpp"

namespace dcc {

void MlpParams::validate() const {
  if (layer_dims.size() < 2) throw StateError("layer_dims needs at least input and output dims");
  const std::size_t layers = layer_dims.size() - 1;
  if (weights.size() != layers || biases.size() != layers) {
    throw StateError("parameter count does not match layer_dims");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] ||
        biases[l].size() != layer_dims[l + 1]) {
      throw StateError("layer " + std::to_string(l) + " shape does not match layer_dims");
    }
  }
  const std::size_t k = layer_dims.back();
  if (b_logits.rows() != k || b_logits.cols() != k) throw StateError("B' must be K x K");
  if (!all_finite()) throw StateError("parameters contain non-finite values");
}

bool MlpParams::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  for (const auto& w : weights)
    if (!w.all_finite()) return false;
  for (const auto& b : biases)
    if (!std::all_of(b.begin(), b.end(), finite)) return false;
  return b_logits.all_finite();
}

MlpGradients MlpGradients::zeros_like(const MlpParams& params) {
  MlpGradients g;
  for (const auto& w : params.weights) g.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : params.biases) g.biases.emplace_back(b.size(), 0.0);
  g.b_logits = Matrix(params.b_logits.rows(), params.b_logits.cols());
  return g;
}

MlpParams init_params(std::span<const std::size_t> layer_dims, std::uint64_t seed,
                      double init_gain) {
  if (layer_dims.size() < 2) throw ConfigError("layer_dims needs at least input and output dims");
  if (std::any_of(layer_dims.begin(), layer_dims.end(), [](std::size_t d) { return d == 0; })) {
    throw ConfigError("layer_dims entries must be positive");
  }
  if (!(init_gain > 0.0)) throw ConfigError("init_gain must be positive");

  MlpParams p;
  p.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  p.seed = seed;
  Rng rng(derive_seed(seed, "init"));
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    const double bound = init_gain / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  const std::size_t k = layer_dims.back();
  p.b_logits = Matrix(k, k, -1.0);
  for (std::size_t i = 0; i < k; ++i) p.b_logits(i, i) = 1.0;
  return p;
}

std::pair<Matrix, ForwardTape> forward(const MlpParams& params, const Matrix& x_batch) {
  if (params.weights.empty()) throw StateError("forward: network has no layers");
  if (x_batch.rows() != params.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x_batch.rows()) +
                     " rows, network expects " + std::to_string(params.input_dim()));
  }
  ForwardTape tape;
  tape.inputs.reserve(params.num_layers());
  tape.inputs.push_back(x_batch);
  const std::size_t last = params.num_layers() - 1;
  for (std::size_t l = 0;; ++l) {
    Matrix z = matmul(params.weights[l], tape.inputs.back());
    const auto& bias = params.biases[l];
    for (std::size_t r = 0; r < z.rows(); ++r) {
      const double b = bias[r];
      for (double& v : z.row(r)) v += b;
    }
    if (l == last) {
      softmax_columns(z);
      tape.output = z;
      return {std::move(z), std::move(tape)};
    }
    for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
    tape.inputs.push_back(std::move(z));
  }
}

MlpGradients backward(const MlpParams& params, const ForwardTape& tape, const Matrix& grad_m) {
  const std::size_t layers = params.num_layers();
  if (tape.inputs.size() != layers) throw StateError("backward: tape depth does not match network");
  for (std::size_t l = 0; l < layers; ++l) {
    if (tape.inputs[l].rows() != params.layer_dims[l] ||
        tape.inputs[l].cols() != tape.batch_size()) {
      throw StateError("backward: tape layer " + std::to_string(l) + " shape mismatch");
    }
  }
  if (tape.output.rows() != params.num_clusters() || tape.output.cols() != tape.batch_size()) {
    throw StateError("backward: tape output shape mismatch");
  }
  if (grad_m.rows() != tape.output.rows() || grad_m.cols() != tape.output.cols()) {
    throw ShapeError("backward: grad_m shape does not match forward output");
  }

  MlpGradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  g.b_logits = Matrix(params.b_logits.rows(), params.b_logits.cols());

  // Softmax Jacobian: dz_l = m_l (g_l − Σ_k g_k m_k).
  const Matrix& m = tape.output;
  const std::size_t k = m.rows();
  const std::size_t n = m.cols();
  Matrix dz(k, n);
  std::vector<double> inner(n, 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t j = 0; j < n; ++j) inner[j] += grad_m(r, j) * m(r, j);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t j = 0; j < n; ++j) dz(r, j) = m(r, j) * (grad_m(r, j) - inner[j]);

  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = matmul_nt(dz, tape.inputs[l]);
    auto& gb = g.biases[l];
    gb.assign(dz.rows(), 0.0);
    for (std::size_t r = 0; r < dz.rows(); ++r) {
      double s = 0.0;
      for (double v : dz.row(r)) s += v;
      gb[r] = s;
    }
    if (l == 0) break;
    Matrix da = matmul_tn(params.weights[l], dz);
    // ReLU: the subgradient at 0 is 0.
    const auto post = tape.inputs[l].data();
    auto d = da.data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!(post[i] > 0.0)) d[i] = 0.0;
    dz = std::move(da);
  }
  return g;
}

BMatrix b_matrix(const MlpParams& params) {
  BMatrix out{params.b_logits, params.b_logits};
  auto b = out.b.data();
  auto d = out.d_b.data();
  for (std::size_t i = 0; i < b.size(); ++i) {
    b[i] = sigmoid(b[i]);
    d[i] = b[i] * (1.0 - b[i]);
  }
  return out;
}

}  // namespace dcc
