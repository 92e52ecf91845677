#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcc/datagen.hpp"
#include "dcc/linalg.hpp"
#include "dcc/model.hpp"

namespace dcc {

// Bijection on {0, ..., K−1}.
class Permutation {
 public:
  Permutation() = default;
  // Throws DataError unless `mapping` is a bijection.
  explicit Permutation(std::vector<std::size_t> mapping);
  static Permutation identity(std::size_t k);

  std::size_t size() const noexcept { return mapping_.size(); }
  std::size_t operator[](std::size_t i) const noexcept { return mapping_[i]; }
  const std::vector<std::size_t>& mapping() const noexcept { return mapping_; }
  Permutation inverse() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> mapping_;
};

struct Assignment {
  Permutation assignment;  // row r is matched to column assignment[r]
  double total_cost = 0.0;
};

// Exact minimum-cost perfect matching on a square cost matrix (O(K³)).
Assignment hungarian(const Matrix& cost);

struct AlignedMse {
  double mse = 0.0;
  // Row k of m_hat is compared against row perm[k] of m_true.
  Permutation perm;
};

// Rows of both matrices are ℓ2-normalized; the row permutation is applied to
// m_true only and chosen to minimize the mean squared row distance.
AlignedMse aligned_mse(const Matrix& m_hat, const Matrix& m_true);

struct ClusteringMetrics {
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;  // in [−1, 1]; negative when agreement is below chance
};

// ACC via Hungarian matching of the contingency table; NMI with natural logs
// and geometric-mean normalization (1 when both labelings are a single
// cluster, 0 when exactly one is); ARI by the adjusted pair-counting formula.
ClusteringMetrics clustering_metrics(std::span<const std::size_t> labels_pred,
                                     std::span<const std::size_t> labels_true);

struct AscCheck {
  bool satisfied = false;
  // witnesses[k] is the column closest to e_k when within tol.
  std::vector<std::optional<std::size_t>> witnesses;
  std::vector<std::size_t> missing;
};

// Anchor check: each e_k has a column within ℓ∞ distance tol.
AscCheck check_asc(const Matrix& m, double tol);

enum class SscVerdict { kCertifiedByAsc, kSampledPass, kSampledFail };
std::string to_string(SscVerdict v);
SscVerdict ssc_verdict_from_string(const std::string& s);

struct SscCheck {
  SscVerdict verdict = SscVerdict::kSampledFail;
  std::size_t directions = 0;
  std::size_t passed = 0;
  double worst_residual = 0.0;
};

inline constexpr double kSscResidualTol = 1e-8;

// Samples unit directions from the second-order cone
// {x : √(K−1)‖x‖ ≤ 1ᵀx} (a quarter of them on its boundary) and tests each for
// membership in cone(m) by nonnegative least squares. Exact anchors
// short-circuit to kCertifiedByAsc.
SscCheck check_ssc_sampled(const Matrix& m, std::size_t n_directions, std::uint64_t seed);

struct NnlsResult {
  std::vector<double> weights;
  double residual = 0.0;  // ‖a·w − b‖₂
};

// Lawson-Hanson active-set solver for min ‖a·w − b‖ subject to w ≥ 0.
NnlsResult nnls(const Matrix& a, std::span<const double> b);

struct KMeansResult {
  std::vector<std::size_t> labels;
  double inertia = 0.0;
};

// Lloyd's algorithm on the columns of x with k-means++ seeding, best of
// `restarts` runs by inertia. Emptied clusters are re-seeded at the point
// farthest from its centroid.
KMeansResult kmeans_reference(const Matrix& x, std::size_t k, std::uint64_t seed,
                              std::size_t restarts = 10);

struct SplitMetrics {
  double mse = 0.0;
  Permutation perm;
  ClusteringMetrics clustering;
};

struct EvalOptions {
  double asc_tol = 0.05;
  std::size_t ssc_directions = 200;
  std::uint64_t ssc_seed = 0;
  double gram_ridge = 1e-8;
};

struct EvalReport {
  SplitMetrics seen;
  std::optional<SplitMetrics> unseen;
  double gram_logdet = 0.0;  // log det(M̂ M̂ᵀ + ridge I) on the seen split
  AscCheck asc;              // on the estimated seen memberships
  SscCheck ssc;
};

// Predicted memberships for every column of `features`, in chunks.
Matrix predict_memberships(const MlpParams& params, const Matrix& features);

EvalReport evaluate_model(const MlpParams& params, const GroundTruth& gt,
                          const EvalOptions& options = {});

// One CSV row (with a header) plus a JSON sidecar holding the permutations and
// ASC witnesses.
std::vector<std::string> eval_report_csv_header();
std::vector<std::string> eval_report_csv_row(const EvalReport& report);
std::string eval_report_json(const EvalReport& report);

}  // namespace dcc
