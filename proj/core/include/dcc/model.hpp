#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcc/linalg.hpp"

namespace dcc {

// Parameters of the membership network: a fully connected ReLU MLP whose
// output layer is a softmax over K clusters, plus the K×K logit matrix B′
// whose elementwise sigmoid is the confusion Gram matrix B.
struct MlpParams {
  std::vector<std::size_t> layer_dims;  // [D, h1, ..., hL, K]
  std::uint64_t seed = 0;
  std::vector<Matrix> weights;               // weights[l] is dims[l+1] × dims[l]
  std::vector<std::vector<double>> biases;   // biases[l] has dims[l+1] entries
  Matrix b_logits;                           // K × K

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_clusters() const { return layer_dims.back(); }
  std::size_t num_layers() const { return weights.size(); }

  // Throws StateError if shapes disagree with layer_dims or anything is non-finite.
  void validate() const;
  bool all_finite() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Same layout as MlpParams, holding d loss / d parameter.
struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  Matrix b_logits;

  static MlpGradients zeros_like(const MlpParams& params);
};

// Cached intermediates of one forward pass.
struct ForwardTape {
  // inputs[l] is the input to layer l (inputs[0] is the batch itself).
  std::vector<Matrix> inputs;
  // Softmax output, K × batch.
  Matrix output;

  std::size_t batch_size() const { return inputs.empty() ? 0 : inputs.front().cols(); }
};

// Weights ~ Uniform(−gain/√fan_in, +gain/√fan_in), biases 0, B′ = +1 on the
// diagonal and −1 elsewhere. Pure function of (layer_dims, seed, gain).
MlpParams init_params(std::span<const std::size_t> layer_dims, std::uint64_t seed,
                      double init_gain = 1.0);

// Memberships for a D × B batch of column features. Every output column lies
// on the probability simplex.
std::pair<Matrix, ForwardTape> forward(const MlpParams& params, const Matrix& x_batch);

// Reverse-mode gradients given d loss / d output (K × B). b_logits is left at
// zero; the loss owns the B′ gradient.
MlpGradients backward(const MlpParams& params, const ForwardTape& tape, const Matrix& grad_m);

struct BMatrix {
  Matrix b;        // sigmoid(B′)
  Matrix d_b;      // elementwise dB/dB′ = B ⊙ (1 − B)
};

BMatrix b_matrix(const MlpParams& params);

// Checkpoint: JSON document with "format_version", "layer_dims", "seed" and all
// tensors flattened row-major. Doubles are written in shortest round-trip form
// so load(save(p)) == p bit for bit.
inline constexpr int kCheckpointFormatVersion = 1;

std::string checkpoint_to_string(const MlpParams& params);
MlpParams checkpoint_from_string(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const MlpParams& params);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dcc
