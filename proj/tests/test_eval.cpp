#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcc/datagen.hpp"
#include "dcc/error.hpp"
#include "dcc/eval.hpp"
#include "dcc/model.hpp"
#include "test_support.hpp"

using namespace dcc;

namespace {

double brute_force_assignment(const Matrix& cost) {
  std::vector<std::size_t> perm(cost.rows());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t r = 0; r < perm.size(); ++r) s += cost(r, perm[r]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(perm[r], c);
  return out;
}

Matrix columns_of(const std::vector<std::vector<double>>& cols) {
  Matrix m(cols.front().size(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) = cols[c][r];
  return m;
}

}  // namespace

TEST(Hungarian, SmallCases) {
  const Assignment a = hungarian(Matrix{{0, 1}, {1, 0}});
  EXPECT_EQ(a.assignment, Permutation::identity(2));
  EXPECT_EQ(a.total_cost, 0.0);
  const Assignment b = hungarian(Matrix{{1, 2}, {2, 1}});
  EXPECT_EQ(b.assignment, Permutation::identity(2));
  EXPECT_EQ(b.total_cost, 2.0);
  EXPECT_THROW(hungarian(Matrix(2, 3)), ShapeError);
}

TEST(Hungarian, MatchesBruteForceUpToSix) {
  Rng rng(17);
  for (std::size_t k = 1; k <= 6; ++k) {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix cost = dcc::testing::random_matrix(k, k, rng, -3.0, 3.0);
      const Assignment a = hungarian(cost);
      double direct = 0.0;
      for (std::size_t r = 0; r < k; ++r) direct += cost(r, a.assignment[r]);
      EXPECT_NEAR(a.total_cost, brute_force_assignment(cost), 1e-12);
      EXPECT_NEAR(direct, a.total_cost, 1e-12);
    }
  }
}

TEST(AlignedMse, ZeroForPermutedCopies) {
  Rng rng(3);
  const Matrix t = dcc::testing::random_memberships(3, 50, rng);
  const AlignedMse same = aligned_mse(t, t);
  EXPECT_NEAR(same.mse, 0.0, 1e-15);
  EXPECT_EQ(same.perm, Permutation::identity(3));
  const std::vector<std::size_t> perm{2, 0, 1};
  const AlignedMse shuffled = aligned_mse(permute_rows(t, perm), t);
  EXPECT_NEAR(shuffled.mse, 0.0, 1e-15);
  EXPECT_EQ(shuffled.perm.mapping(), perm);
}

TEST(AlignedMse, MatchesBruteForceUpToSix) {
  Rng rng(19);
  for (std::size_t k = 2; k <= 6; ++k) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix h = dcc::testing::random_memberships(k, 30, rng);
      const Matrix t = dcc::testing::random_memberships(k, 30, rng);
      EXPECT_NEAR(aligned_mse(h, t).mse, dcc::testing::brute_force_aligned_mse(h, t), 1e-12);
    }
  }
}

TEST(AlignedMse, PermutesTruthOnly) {
  Rng rng(23);
  const Matrix h = dcc::testing::random_memberships(3, 10, rng);
  const Matrix t = dcc::testing::random_memberships(3, 10, rng);
  const AlignedMse ht = aligned_mse(h, t);
  const AlignedMse th = aligned_mse(t, h);
  EXPECT_NEAR(ht.mse, th.mse, 1e-12);
  EXPECT_EQ(th.perm, ht.perm.inverse());
}

TEST(AlignedMse, Errors) {
  EXPECT_THROW(aligned_mse(Matrix{{1, 0}, {0, 0}}, Matrix{{1, 0}, {0, 1}}), DegenerateInputError);
  EXPECT_THROW(aligned_mse(Matrix(2, 3, 1.0), Matrix(3, 3, 1.0)), ShapeError);
}

TEST(ClusteringMetrics, IdenticalAndRelabeled) {
  const std::vector<std::size_t> t{0, 0, 1, 1, 2, 2, 2, 0};
  const ClusteringMetrics same = clustering_metrics(t, t);
  EXPECT_DOUBLE_EQ(same.acc, 1.0);
  EXPECT_NEAR(same.nmi, 1.0, 1e-12);
  EXPECT_NEAR(same.ari, 1.0, 1e-12);
  std::vector<std::size_t> relabeled;
  for (auto v : t) relabeled.push_back((v + 1) % 3);
  const ClusteringMetrics r = clustering_metrics(relabeled, t);
  EXPECT_DOUBLE_EQ(r.acc, 1.0);
  EXPECT_NEAR(r.nmi, 1.0, 1e-12);
  EXPECT_NEAR(r.ari, 1.0, 1e-12);
}

TEST(ClusteringMetrics, CrossedPairs) {
  // Pair counts: no same/same pair, two same/different pairs each way, two different/different.
  const std::vector<std::size_t> t{0, 0, 1, 1};
  const std::vector<std::size_t> p{0, 1, 0, 1};
  const ClusteringMetrics m = clustering_metrics(p, t);
  EXPECT_DOUBLE_EQ(m.acc, 0.5);
  EXPECT_NEAR(m.ari, -0.5, 1e-12);
  EXPECT_NEAR(m.nmi, 0.0, 1e-12);
}

TEST(ClusteringMetrics, KnownValues) {
  // Values cross-checked against a standard reference implementation.
  const std::vector<std::size_t> t{0, 0, 0, 1, 1, 1};
  const std::vector<std::size_t> p{0, 0, 1, 1, 2, 2};
  const ClusteringMetrics m = clustering_metrics(p, t);
  EXPECT_NEAR(m.ari, 0.24242424242424243, 1e-12);
  EXPECT_NEAR(m.nmi, 0.5295405780575618, 1e-12);
  EXPECT_NEAR(m.acc, 4.0 / 6.0, 1e-15);
  EXPECT_THROW(clustering_metrics(std::vector<std::size_t>{0, 1}, t), ShapeError);
}

TEST(CheckAsc, AnchorsAndMissingAnchor) {
  Rng rng(2);
  const Matrix base = dcc::testing::random_memberships(3, 20, rng);
  Matrix with(3, 23);
  for (std::size_t c = 0; c < 20; ++c)
    for (std::size_t r = 0; r < 3; ++r) with(r, c) = base(r, c);
  for (std::size_t k = 0; k < 3; ++k) with(k, 20 + k) = 1.0;
  const AscCheck ok = check_asc(with, 1e-9);
  EXPECT_TRUE(ok.satisfied);
  EXPECT_EQ(ok.witnesses[1], 21u);

  Matrix without(3, 22);
  for (std::size_t c = 0; c < 22; ++c)
    for (std::size_t r = 0; r < 3; ++r) without(r, c) = with(r, c);
  const AscCheck missing = check_asc(without, 1e-9);
  EXPECT_FALSE(missing.satisfied);
  EXPECT_EQ(missing.missing, std::vector<std::size_t>{2});

  EXPECT_FALSE(check_asc(Matrix(3, 5, 1.0 / 3.0), 0.6).satisfied);
}

TEST(CheckSsc, Verdicts) {
  EXPECT_EQ(check_ssc_sampled(Matrix::identity(3), 200, 1).verdict, SscVerdict::kCertifiedByAsc);
  EXPECT_EQ(check_ssc_sampled(Matrix(3, 10, 1.0 / 3.0), 200, 1).verdict, SscVerdict::kSampledFail);
  // Points on the simplex edges near each vertex: the conic hull is
  // {x : x_i ≤ 9 (x_j + x_k)}-style and contains the second-order cone without any anchor.
  const Matrix scattered = columns_of({{0.9, 0.1, 0}, {0.9, 0, 0.1}, {0.1, 0.9, 0}, {0, 0.9, 0.1},
                                       {0.1, 0, 0.9}, {0, 0.1, 0.9}});
  EXPECT_FALSE(check_asc(scattered, 0.05).satisfied);
  EXPECT_EQ(check_ssc_sampled(scattered, 400, 1).verdict, SscVerdict::kSampledPass);
  // Collapsing toward the centre loses the cone.
  const Matrix narrow = columns_of({{0.5, 0.25, 0.25}, {0.25, 0.5, 0.25}, {0.25, 0.25, 0.5}});
  EXPECT_EQ(check_ssc_sampled(narrow, 400, 1).verdict, SscVerdict::kSampledFail);
  EXPECT_THROW(check_ssc_sampled(Matrix::identity(3), 10, 1), ConfigError);
  for (auto v : {SscVerdict::kCertifiedByAsc, SscVerdict::kSampledPass, SscVerdict::kSampledFail}) {
    EXPECT_EQ(ssc_verdict_from_string(to_string(v)), v);
  }
}

TEST(Nnls, RecoversNonnegativeCombination) {
  const Matrix a{{1, 0, 1}, {0, 1, 1}, {0, 0, 1}};
  const std::vector<double> b{2, 3, 1};
  const NnlsResult r = nnls(a, b);
  EXPECT_NEAR(r.residual, 0.0, 1e-10);
  EXPECT_NEAR(r.weights[0], 1.0, 1e-10);
  EXPECT_NEAR(r.weights[2], 1.0, 1e-10);
  const NnlsResult neg = nnls(Matrix{{1}, {0}}, std::vector<double>{-1, 0});
  EXPECT_EQ(neg.weights[0], 0.0);
  EXPECT_NEAR(neg.residual, 1.0, 1e-12);
}

TEST(KMeans, SeparatedBlobsAndDegenerateCases) {
  Rng rng(4);
  Matrix x(2, 40);
  std::vector<std::size_t> truth(40);
  for (std::size_t c = 0; c < 40; ++c) {
    truth[c] = c % 2;
    x(0, c) = (truth[c] ? 10.0 : -10.0) + rng.normal() * 0.1;
    x(1, c) = rng.normal() * 0.1;
  }
  const KMeansResult r = kmeans_reference(x, 2, 1);
  EXPECT_DOUBLE_EQ(clustering_metrics(r.labels, truth).acc, 1.0);
  EXPECT_EQ(kmeans_reference(x, 2, 1).labels, r.labels);
  const Matrix few{{0, 1, 5}, {0, 2, 1}};
  EXPECT_NEAR(kmeans_reference(few, 3, 0).inertia, 0.0, 1e-15);
}

TEST(EvaluateModel, UntrainedModelNearChance) {
  const GroundTruth gt = synth_generate(2000, 3, 11);
  const std::vector<std::size_t> dims{3, 64, 64, 3};
  EvalOptions opt;
  opt.ssc_directions = 100;
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) acc += evaluate_model(init_params(dims, s), gt, opt).seen.clustering.acc;
  EXPECT_NEAR(acc / 20.0, 1.0 / 3.0, 0.15);
}

TEST(EvaluateModel, ShapeChecks) {
  const GroundTruth gt = synth_generate(60, 3, 1);
  const std::vector<std::size_t> wrong_k{3, 4, 2};
  const std::vector<std::size_t> wrong_d{2, 4, 3};
  EXPECT_THROW(evaluate_model(init_params(wrong_k, 0), gt), ConfigError);
  EXPECT_THROW(evaluate_model(init_params(wrong_d, 0), gt), ConfigError);
  const std::vector<std::size_t> ok{3, 4, 3};
  const EvalReport rep = evaluate_model(init_params(ok, 0), gt);
  ASSERT_TRUE(rep.unseen.has_value());
  EXPECT_TRUE(std::isfinite(rep.gram_logdet));
  EXPECT_EQ(eval_report_csv_row(rep).size(), eval_report_csv_header().size());
}
