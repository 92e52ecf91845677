#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dcc/linalg.hpp"

namespace dcc {

// Ground-truth memberships (K × N, columns on the simplex) and the matching
// features (D × N). Columns [0, seen_count) are the seen samples.
struct GroundTruth {
  Matrix m_true;
  Matrix features;
  std::size_t seen_count = 0;

  std::size_t num_samples() const { return m_true.cols(); }
  std::size_t num_clusters() const { return m_true.rows(); }
  std::size_t unseen_count() const { return num_samples() - seen_count; }

  // Column slices of memberships / features.
  static Matrix columns(const Matrix& m, std::size_t begin, std::size_t end);
  Matrix seen_memberships() const { return columns(m_true, 0, seen_count); }
  Matrix unseen_memberships() const { return columns(m_true, seen_count, num_samples()); }
  Matrix seen_features() const { return columns(features, 0, seen_count); }
  Matrix unseen_features() const { return columns(features, seen_count, num_samples()); }
};

struct Annotation {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  std::uint8_t y = 0;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Pairwise similarity labels over samples [0, n).
struct AnnotationSet {
  std::vector<Annotation> triplets;
  std::size_t n = 0;

  std::size_t size() const { return triplets.size(); }
  // Throws DataError on an out-of-range index or a label outside {0, 1}.
  void validate() const;

  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

// Column-stochastic K × K matrix, A(i, j) = Pr(annotator perceives i | true j).
class ConfusionMatrix {
 public:
  // Throws DataError if not square, negative, or any column sum is off by > 1e-9.
  explicit ConfusionMatrix(Matrix a);

  const Matrix& matrix() const noexcept { return a_; }
  std::size_t size() const noexcept { return a_.rows(); }
  // AᵀA, the Gram matrix that enters the pair probability.
  Matrix gram() const;

 private:
  Matrix a_;
};

// Maps a membership vector to a feature vector (the inverse of the ground-truth
// feature-to-membership function).
struct InverseFeatureMap {
  std::size_t feature_dim = 0;
  std::function<void(std::span<const double> m, std::span<double> x)> apply;
};

// x = [2 m1, 3 m2 + 1, m1 m2 + m3 − 2] for K = 3.
InverseFeatureMap default_inverse_map_k3();

struct SynthOptions {
  std::size_t seen_count = 0;       // 0 means n / 2
  double noise_variance = 0.1;
  const InverseFeatureMap* feature_map = nullptr;  // nullptr means the built-in K = 3 map
};

// Random unit vectors (normalized Gaussians) plus i.i.d. Gaussian noise,
// truncated at zero and ℓ1-normalized per column; all-zero columns are redrawn.
GroundTruth synth_generate(std::size_t n, std::size_t k, std::uint64_t seed,
                           const SynthOptions& options = {});

// Ordered pairs uniform over the seen block, y ~ Bernoulli(m_iᵀ B m_j).
// Per annotation the stream draws i, then j, then the Bernoulli uniform.
AnnotationSet sample_annotations(const GroundTruth& gt, std::size_t m_pairs, const Matrix& b_true,
                                 std::uint64_t seed);

ConfusionMatrix default_confusion_k3();

// Uniform ordered pairs over [0, labels.size()), y = [labels_i == labels_j].
AnnotationSet machine_annotate(std::span<const std::size_t> labels_pred, std::size_t m_pairs,
                               std::uint64_t seed);

// Fraction of triplets whose label disagrees with [argmax m_i == argmax m_j].
double annotation_error_rate(const AnnotationSet& ann, const GroundTruth& gt);

// Hard labels by column argmax, lowest index wins ties.
std::vector<std::size_t> argmax_labels(const Matrix& memberships);

// Deterministic split: every triplet goes to the held-out side independently
// with probability `fraction`.
struct AnnotationSplit {
  AnnotationSet train;
  AnnotationSet validation;
};
AnnotationSplit split_annotations(const AnnotationSet& ann, double fraction, std::uint64_t seed);

}  // namespace dcc
