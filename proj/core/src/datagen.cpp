#include "dcc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dcc/error.hpp"
#include "dcc/rng.hpp"

namespace dcc {

Matrix GroundTruth::columns(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin > end || end > m.cols()) throw ShapeError("column slice out of range");
  Matrix out(m.rows(), end - begin);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin),
              src.begin() + static_cast<std::ptrdiff_t>(end), out.row(r).begin());
  }
  return out;
}

void AnnotationSet::validate() const {
  for (std::size_t t = 0; t < triplets.size(); ++t) {
    const auto& a = triplets[t];
    if (a.i >= n || a.j >= n) {
      throw DataError("annotation " + std::to_string(t) + " index out of range for n=" +
                      std::to_string(n));
    }
    if (a.y > 1) throw DataError("annotation " + std::to_string(t) + " label is not 0 or 1");
  }
}

ConfusionMatrix::ConfusionMatrix(Matrix a) : a_(std::move(a)) {
  if (a_.rows() != a_.cols() || a_.rows() == 0) throw DataError("confusion matrix must be square");
  for (std::size_t c = 0; c < a_.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < a_.rows(); ++r) {
      if (!(a_(r, c) >= 0.0)) throw DataError("confusion matrix has a negative entry");
      s += a_(r, c);
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw DataError("confusion matrix column " + std::to_string(c) + " sums to " +
                      std::to_string(s));
    }
  }
}

Matrix ConfusionMatrix::gram() const { return matmul_tn(a_, a_); }

InverseFeatureMap default_inverse_map_k3() {
  return {3, [](std::span<const double> m, std::span<double> x) {
            x[0] = 2.0 * m[0];
            x[1] = 3.0 * m[1] + 1.0;
            x[2] = m[0] * m[1] + m[2] - 2.0;
          }};
}

GroundTruth synth_generate(std::size_t n, std::size_t k, std::uint64_t seed,
                           const SynthOptions& options) {
  if (k < 2) throw ConfigError("synth_generate: K must be at least 2");
  if (n < 2 * k) throw ConfigError("synth_generate: need N >= 2K");
  if (!(options.noise_variance >= 0.0)) throw ConfigError("noise variance must be nonnegative");
  const InverseFeatureMap builtin = default_inverse_map_k3();
  const InverseFeatureMap* map = options.feature_map;
  if (map == nullptr) {
    if (k != 3) throw ConfigError("built-in feature map supports K=3 only; supply a custom map");
    map = &builtin;
  }
  const std::size_t seen = options.seen_count == 0 ? n / 2 : options.seen_count;
  if (seen > n) throw ConfigError("seen_count exceeds N");

  GroundTruth gt;
  gt.m_true = Matrix(k, n);
  gt.features = Matrix(map->feature_dim, n);
  gt.seen_count = seen;

  Rng rng(derive_seed(seed, "synth"));
  const double noise_sd = std::sqrt(options.noise_variance);
  std::vector<double> v(k);
  std::vector<double> x(map->feature_dim);
  for (std::size_t c = 0; c < n; ++c) {
    double l1 = 0.0;
    while (!(l1 > 0.0)) {
      double norm2 = 0.0;
      for (double& e : v) {
        e = rng.normal();
        norm2 += e * e;
      }
      if (!(norm2 > 0.0)) continue;
      const double inv = 1.0 / std::sqrt(norm2);
      l1 = 0.0;
      for (double& e : v) {
        e = std::max(0.0, e * inv + noise_sd * rng.normal());
        l1 += e;
      }
    }
    for (std::size_t r = 0; r < k; ++r) gt.m_true(r, c) = v[r] / l1;
    for (std::size_t r = 0; r < k; ++r) v[r] = gt.m_true(r, c);
    map->apply(v, x);
    for (std::size_t r = 0; r < x.size(); ++r) gt.features(r, c) = x[r];
  }
  return gt;
}

AnnotationSet sample_annotations(const GroundTruth& gt, std::size_t m_pairs, const Matrix& b_true,
                                 std::uint64_t seed) {
  const std::size_t k = gt.num_clusters();
  if (b_true.rows() != k || b_true.cols() != k) throw ShapeError("b_true must be K x K");
  for (double v : b_true.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ModelError("b_true entries must lie in [0, 1]");
  }
  if (gt.seen_count == 0) throw ConfigError("no seen samples to annotate");

  AnnotationSet ann;
  ann.n = gt.seen_count;
  ann.triplets.reserve(m_pairs);
  Rng rng(derive_seed(seed, "annotate"));
  std::vector<double> bm(k);
  for (std::size_t t = 0; t < m_pairs; ++t) {
    const auto i = static_cast<std::uint32_t>(rng.uniform_index(gt.seen_count));
    const auto j = static_cast<std::uint32_t>(rng.uniform_index(gt.seen_count));
    for (std::size_t r = 0; r < k; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += b_true(r, c) * gt.m_true(c, j);
      bm[r] = s;
    }
    double p = 0.0;
    for (std::size_t r = 0; r < k; ++r) p += gt.m_true(r, i) * bm[r];
    if (p < -1e-9 || p > 1.0 + 1e-9) {
      throw ModelError("pair probability " + std::to_string(p) + " outside [0, 1]");
    }
    p = std::clamp(p, 0.0, 1.0);
    const double u = rng.uniform01();
    ann.triplets.push_back({i, j, static_cast<std::uint8_t>(u < p ? 1 : 0)});
  }
  return ann;
}

ConfusionMatrix default_confusion_k3() {
  return ConfusionMatrix(Matrix{{1.0, 0.2, 0.3}, {0.0, 0.8, 0.3}, {0.0, 0.0, 0.4}});
}

AnnotationSet machine_annotate(std::span<const std::size_t> labels_pred, std::size_t m_pairs,
                               std::uint64_t seed) {
  if (labels_pred.empty()) throw ConfigError("machine_annotate: empty label array");
  AnnotationSet ann;
  ann.n = labels_pred.size();
  ann.triplets.reserve(m_pairs);
  Rng rng(derive_seed(seed, "machine"));
  for (std::size_t t = 0; t < m_pairs; ++t) {
    const auto i = static_cast<std::uint32_t>(rng.uniform_index(ann.n));
    const auto j = static_cast<std::uint32_t>(rng.uniform_index(ann.n));
    ann.triplets.push_back({i, j, static_cast<std::uint8_t>(labels_pred[i] == labels_pred[j])});
  }
  return ann;
}

std::vector<std::size_t> argmax_labels(const Matrix& memberships) {
  std::vector<std::size_t> labels(memberships.cols(), 0);
  for (std::size_t c = 0; c < memberships.cols(); ++c) {
    double best = memberships(0, c);
    for (std::size_t r = 1; r < memberships.rows(); ++r) {
      if (memberships(r, c) > best) {
        best = memberships(r, c);
        labels[c] = r;
      }
    }
  }
  return labels;
}

double annotation_error_rate(const AnnotationSet& ann, const GroundTruth& gt) {
  if (ann.triplets.empty()) return 0.0;
  const auto labels = argmax_labels(gt.m_true);
  std::size_t wrong = 0;
  for (const auto& a : ann.triplets) {
    if (a.i >= labels.size() || a.j >= labels.size()) {
      throw DataError("annotation index out of range for ground truth");
    }
    const bool same = labels[a.i] == labels[a.j];
    if (same != (a.y == 1)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(ann.triplets.size());
}

AnnotationSplit split_annotations(const AnnotationSet& ann, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in [0, 1)");
  AnnotationSplit out;
  out.train.n = ann.n;
  out.validation.n = ann.n;
  const std::size_t total = ann.triplets.size();
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "holdout"));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<char> in_validation(total, 0);
  for (std::size_t t = 0; t < held; ++t) in_validation[order[t]] = 1;
  out.validation.triplets.reserve(held);
  out.train.triplets.reserve(total - held);
  for (std::size_t t = 0; t < total; ++t) {
    (in_validation[t] ? out.validation : out.train).triplets.push_back(ann.triplets[t]);
  }
  return out;
}

}  // namespace dcc
