#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dcc/error.hpp"
#include "dcc/model.hpp"
#include "test_support.hpp"

using namespace dcc;

namespace {

// Scalar loop evaluation of the same network, one sample at a time.
std::vector<double> straight_line_forward(const MlpParams& p, std::vector<double> x) {
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const Matrix& w = p.weights[l];
    std::vector<double> z(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double s = p.biases[l][r];
      for (std::size_t c = 0; c < w.cols(); ++c) s += w(r, c) * x[c];
      z[r] = s;
    }
    if (l + 1 < p.num_layers()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    } else {
      double mx = z[0];
      for (double v : z) mx = std::max(mx, v);
      double sum = 0.0;
      for (double& v : z) sum += v = std::exp(v - mx);
      for (double& v : z) v /= sum;
    }
    x = std::move(z);
  }
  return x;
}

double weighted_output(const MlpParams& p, const Matrix& x, const Matrix& g) {
  const Matrix m = forward(p, x).first;
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * g.data()[i];
  return s;
}

}  // namespace

TEST(InitParams, DeterministicPerSeed) {
  const std::vector<std::size_t> dims{3, 4, 3};
  EXPECT_EQ(init_params(dims, 7), init_params(dims, 7));
  EXPECT_NE(init_params(dims, 7), init_params(dims, 8));
}

TEST(InitParams, BPrimeDiagonalPlusOneOffDiagonalMinusOne) {
  const std::vector<std::size_t> dims{3, 4, 3};
  const Matrix expected{{1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  EXPECT_EQ(init_params(dims, 7).b_logits, expected);
}

TEST(InitParams, RejectsDegenerateDims) {
  const std::vector<std::size_t> one{3};
  const std::vector<std::size_t> zero{3, 0, 3};
  EXPECT_THROW(init_params(one, 0), ConfigError);
  EXPECT_THROW(init_params(zero, 0), ConfigError);
}

TEST(Forward, ColumnsOnSimplex) {
  const std::vector<std::size_t> dims{3, 8, 8, 3};
  Rng rng(1);
  const MlpParams p = init_params(dims, 3);
  const Matrix x = dcc::testing::random_matrix(3, 1000, rng, -5.0, 5.0);
  const Matrix m = forward(p, x).first;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      EXPECT_GE(m(r, c), 0.0);
      s += m(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Forward, ZeroParamsGiveUniform) {
  const std::vector<std::size_t> dims{2, 5, 4};
  MlpParams p = init_params(dims, 0);
  for (auto& w : p.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
  const Matrix m = forward(p, Matrix{{1, 2}, {3, 4}}).first;
  for (double v : m.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Forward, HandComputedTwoLayerNet) {
  const std::vector<std::size_t> dims{2, 2, 2};
  MlpParams p = init_params(dims, 0);
  p.weights[0] = Matrix{{1, 0}, {0, -1}};
  p.biases[0] = {0.0, 0.5};
  p.weights[1] = Matrix{{1, 1}, {0, 2}};
  p.biases[1] = {0.0, 0.0};
  const Matrix m = forward(p, Matrix{{1}, {2}}).first;
  EXPECT_NEAR(m(0, 0), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(m(1, 0), 1.0 / (std::exp(1.0) + 1.0), 1e-15);
}

TEST(Forward, MatchesStraightLineEvaluator) {
  const std::vector<std::size_t> dims{3, 4, 3};
  const MlpParams p = init_params(dims, 7);
  const Matrix x{{0.5, -1.0}, {2.0, 0.25}, {-0.75, 1.5}};
  const Matrix m = forward(p, x).first;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const auto ref = straight_line_forward(p, x.col(c));
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(m(r, c), ref[r], 1e-12);
  }
}

TEST(Forward, RejectsWrongInputDim) {
  const std::vector<std::size_t> dims{3, 4, 3};
  EXPECT_THROW(forward(init_params(dims, 0), Matrix(2, 5)), ShapeError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const std::vector<std::size_t> dims{3, 5, 3};
  const MlpParams p = init_params(dims, 2);
  Rng rng(3);
  const auto [m, tape] = forward(p, dcc::testing::random_matrix(3, 4, rng));
  const MlpGradients g = backward(p, tape, Matrix(3, 4));
  for (const auto& w : g.weights)
    for (double v : w.data()) EXPECT_EQ(v, 0.0);
  for (const auto& b : g.biases)
    for (double v : b) EXPECT_EQ(v, 0.0);
}

TEST(Backward, RejectsMismatchedTape) {
  const std::vector<std::size_t> a{3, 5, 3};
  const std::vector<std::size_t> b{3, 6, 3};
  Rng rng(3);
  const auto [m, tape] = forward(init_params(a, 0), dcc::testing::random_matrix(3, 4, rng));
  EXPECT_THROW(backward(init_params(b, 0), tape, Matrix(3, 4)), StateError);
}

TEST(Backward, MatchesFiniteDifferences) {
  const std::vector<std::size_t> dims{3, 8, 8, 3};
  Rng rng(9);
  MlpParams p = init_params(dims, 4);
  const Matrix x = dcc::testing::random_matrix(3, 8, rng);
  const Matrix g = dcc::testing::random_matrix(3, 8, rng);
  const auto [m, tape] = forward(p, x);
  const MlpGradients grad = backward(p, tape, g);
  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = weighted_output(p, x, g);
    param = saved - h;
    const double down = weighted_output(p, x, g);
    param = saved;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(analytic - numeric) /
                                std::max({std::abs(analytic), std::abs(numeric), 1e-7}));
  };
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (std::size_t i = 0; i < p.weights[l].size(); ++i)
      check(p.weights[l].data()[i], grad.weights[l].data()[i]);
    for (std::size_t i = 0; i < p.biases[l].size(); ++i) check(p.biases[l][i], grad.biases[l][i]);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Backward, SingleLayerIsOuterProduct) {
  // One softmax layer: d/dW of Σ g ⊙ softmax(Wx) equals dz xᵀ with dz from the softmax Jacobian.
  const std::vector<std::size_t> dims{2, 3};
  const MlpParams p = init_params(dims, 5);
  const Matrix x{{0.3}, {-0.7}};
  const Matrix g{{1.0}, {-2.0}, {0.5}};
  const auto [m, tape] = forward(p, x);
  const MlpGradients grad = backward(p, tape, g);
  double gm = 0.0;
  for (std::size_t r = 0; r < 3; ++r) gm += g(r, 0) * m(r, 0);
  for (std::size_t r = 0; r < 3; ++r) {
    const double dz = m(r, 0) * (g(r, 0) - gm);
    EXPECT_NEAR(grad.biases[0][r], dz, 1e-15);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(grad.weights[0](r, c), dz * x(c, 0), 1e-15);
  }
}

TEST(BMatrix, SigmoidOfLogits) {
  const std::vector<std::size_t> dims{3, 4, 3};
  MlpParams p = init_params(dims, 0);
  const BMatrix init = b_matrix(p);
  EXPECT_NEAR(init.b(0, 0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(init.b(0, 1), 0.2689414213699951, 1e-15);
  p.b_logits = Matrix(3, 3, 0.0);
  const BMatrix half = b_matrix(p);
  for (double v : half.b.data()) EXPECT_EQ(v, 0.5);
  for (double v : half.d_b.data()) EXPECT_EQ(v, 0.25);
  p.b_logits = Matrix(3, 3, -30.0);
  const BMatrix low = b_matrix(p);
  for (double v : low.b.data()) EXPECT_GT(v, 0.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const std::vector<std::size_t> dims{3, 16, 7, 3};
  MlpParams p = init_params(dims, 123);
  p.b_logits(0, 2) = 0.1 + 0.2;
  const std::string text = checkpoint_to_string(p);
  EXPECT_EQ(checkpoint_from_string(text), p);
  const auto path = std::filesystem::temp_directory_path() / "dcc_test_checkpoint.json";
  save_checkpoint(path, p);
  EXPECT_EQ(load_checkpoint(path), p);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptInput) {
  EXPECT_THROW(checkpoint_from_string("{not json"), DataError);
  EXPECT_THROW(checkpoint_from_string("{\"format\":\"other\"}"), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/ckpt.json"), IoError);
}
