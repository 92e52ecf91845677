#include <gtest/gtest.h>

#include <cmath>

#include "dcc/error.hpp"
#include "dcc/loss.hpp"
#include "test_support.hpp"

using namespace dcc;

namespace {

PairBatch make_batch(const Matrix& left, const Matrix& right, std::vector<std::uint8_t> y) {
  return PairBatch{left, right, std::move(y)};
}

// Mean logistic pair loss with B = I, written out directly.
double reference_cc(const PairBatch& b) {
  double total = 0.0;
  for (std::size_t n = 0; n < b.size(); ++n) {
    double p = 0.0;
    for (std::size_t k = 0; k < b.left.rows(); ++k) p += b.left(k, n) * b.right(k, n);
    total += b.labels[n] ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(b.size());
}

}  // namespace

TEST(LossCc, HandValues) {
  const Matrix m{{0.6}, {0.4}};
  EXPECT_NEAR(loss_cc(make_batch(m, m, {1}), Matrix::identity(2)).value, -std::log(0.52), 1e-15);
  const Matrix b = Matrix(2, 2, 0.5);
  EXPECT_NEAR(loss_cc(make_batch(m, m, {0}), b).value, std::log(2.0), 1e-15);
}

TEST(LossCc, ClampsPerfectMatch) {
  const Matrix e1{{1}, {0}, {0}};
  const CcLoss l = loss_cc(make_batch(e1, e1, {1}), Matrix::identity(3), 1e-6);
  EXPECT_NEAR(l.value, -std::log(1.0 - 1e-6), 1e-15);
  EXPECT_EQ(l.clamp_hits, 1u);
  for (double v : l.grad_left.data()) EXPECT_EQ(v, 0.0);
}

TEST(LossCc, RejectsBadLabel) {
  const Matrix m{{0.5}, {0.5}};
  EXPECT_THROW(loss_cc(make_batch(m, m, {2}), Matrix::identity(2)), DataError);
  EXPECT_THROW(loss_cc(make_batch(m, m, {1}), Matrix::identity(3)), ShapeError);
}

TEST(LossCc, IdentityBMatchesStraightLineEvaluator) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(30);
    PairBatch b{dcc::testing::random_memberships(4, n, rng), dcc::testing::random_memberships(4, n, rng),
                {}};
    for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<std::uint8_t>(rng.uniform_index(2)));
    EXPECT_NEAR(loss_cc(b, Matrix::identity(4)).value, reference_cc(b), 1e-12);
  }
}

TEST(LossCc, SymmetricBIsSymmetricInPairOrder) {
  Rng rng(4);
  const Matrix l = dcc::testing::random_memberships(3, 10, rng);
  const Matrix r = dcc::testing::random_memberships(3, 10, rng);
  std::vector<std::uint8_t> y(10);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_index(2));
  const Matrix bsym{{0.9, 0.2, 0.1}, {0.2, 0.8, 0.3}, {0.1, 0.3, 0.7}};
  EXPECT_NEAR(loss_cc(make_batch(l, r, y), bsym).value, loss_cc(make_batch(r, l, y), bsym).value, 1e-15);
}

TEST(LossCc, InvariantUnderJointPermutation) {
  Rng rng(8);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix l = dcc::testing::random_memberships(4, 16, rng);
    const Matrix r = dcc::testing::random_memberships(4, 16, rng);
    const Matrix b = dcc::testing::random_matrix(4, 4, rng, 0.0, 1.0);
    std::vector<std::uint8_t> y(16);
    for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_index(2));
    Matrix pl(4, 16), pr(4, 16), pb(4, 4);
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t c = 0; c < 16; ++c) {
        pl(k, c) = l(perm[k], c);
        pr(k, c) = r(perm[k], c);
      }
      for (std::size_t c = 0; c < 4; ++c) pb(k, c) = b(perm[k], perm[c]);
    }
    EXPECT_NEAR(loss_cc(make_batch(l, r, y), b).value, loss_cc(make_batch(pl, pr, y), pb).value, 1e-12);
  }
}

TEST(LossCc, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  PairBatch batch{dcc::testing::random_memberships(3, 8, rng), dcc::testing::random_memberships(3, 8, rng),
                  {1, 0, 1, 1, 0, 0, 1, 0}};
  Matrix b = dcc::testing::random_matrix(3, 3, rng, 0.1, 0.9);
  const CcLoss an = loss_cc(batch, b);
  const double h = 1e-6;
  auto fd = [&](double& x) {
    const double s = x;
    x = s + h;
    const double up = loss_cc(batch, b).value;
    x = s - h;
    const double down = loss_cc(batch, b).value;
    x = s;
    return (up - down) / (2 * h);
  };
  for (std::size_t i = 0; i < batch.left.size(); ++i) {
    EXPECT_NEAR(an.grad_left.data()[i], fd(batch.left.data()[i]), 1e-7);
    EXPECT_NEAR(an.grad_right.data()[i], fd(batch.right.data()[i]), 1e-7);
  }
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(an.grad_b.data()[i], fd(b.data()[i]), 1e-7);
}

TEST(LossVol, ZeroLambdaIsExactlyZero) {
  Rng rng(2);
  const VolLoss v = loss_vol(dcc::testing::random_memberships(3, 5, rng), 0.0);
  EXPECT_EQ(v.value, 0.0);
  for (double g : v.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(LossVol, RepeatedIdentityColumnsClosedForm) {
  Matrix m(3, 12);
  for (std::size_t c = 0; c < 12; ++c) m(c % 3, c) = 1.0;
  EXPECT_NEAR(loss_vol(m, 1.0, 0.0).value, -3.0 * std::log(4.0), 1e-12);
  EXPECT_NEAR(loss_vol(m, 0.5, 0.0).value, -1.5 * std::log(4.0), 1e-12);
}

TEST(LossVol, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  Matrix m = dcc::testing::random_memberships(3, 8, rng);
  const VolLoss an = loss_vol(m, 0.01);
  const double h = 1e-6;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double s = m.data()[i];
    m.data()[i] = s + h;
    const double up = loss_vol(m, 0.01).value;
    m.data()[i] = s - h;
    const double down = loss_vol(m, 0.01).value;
    m.data()[i] = s;
    const double num = (up - down) / (2 * h);
    EXPECT_LT(std::abs(an.grad.data()[i] - num) / std::max(std::abs(num), 1e-7), 1e-4);
  }
}

TEST(GradBPrime, ChainRuleThroughSigmoid) {
  const Matrix half(2, 2, 0.5);
  const Matrix g{{1, 2}, {3, 4}};
  const Matrix out = grad_bprime(g, half);
  EXPECT_EQ(out, (Matrix{{0.25, 0.5}, {0.75, 1.0}}));
  const Matrix zero = grad_bprime(Matrix(2, 2), half);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  const Matrix saturated(2, 2, sigmoid(25.0));
  const Matrix vanishing = grad_bprime(Matrix(2, 2, 1.0), saturated);
  for (double v : vanishing.data()) EXPECT_LT(std::abs(v), 1e-10);
  EXPECT_THROW(grad_bprime(Matrix(2, 3), half), ShapeError);
}
