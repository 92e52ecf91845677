#include "dcc/loss.hpp"

#include <cmath>
#include <string>

#include "dcc/error.hpp"

namespace dcc {

CcLoss loss_cc(const PairBatch& batch, const Matrix& b, double clamp) {
  if (!(clamp > 0.0 && clamp < 0.5)) throw ConfigError("clamp must lie in (0, 0.5)");
  const std::size_t k = b.rows();
  const std::size_t n = batch.size();
  if (b.cols() != k) throw ShapeError("loss_cc: b must be square");
  if (batch.left.rows() != k || batch.right.rows() != k || batch.left.cols() != n ||
      batch.right.cols() != n) {
    throw ShapeError("loss_cc: membership blocks must be K x B matching the label count");
  }

  CcLoss out;
  out.grad_left = Matrix(k, n);
  out.grad_right = Matrix(k, n);
  out.grad_b = Matrix(k, k);
  if (n == 0) return out;

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> bm(k);   // b · m_j
  std::vector<double> btm(k);  // bᵀ · m_i
  double total = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const std::uint8_t y = batch.labels[c];
    if (y > 1) throw DataError("loss_cc: label " + std::to_string(int(y)) + " is not 0 or 1");
    for (std::size_t r = 0; r < k; ++r) {
      double s = 0.0;
      double t = 0.0;
      for (std::size_t q = 0; q < k; ++q) {
        s += b(r, q) * batch.right(q, c);
        t += b(q, r) * batch.left(q, c);
      }
      bm[r] = s;
      btm[r] = t;
    }
    double p = 0.0;
    for (std::size_t r = 0; r < k; ++r) p += batch.left(r, c) * bm[r];

    const bool clipped = !(p >= clamp && p <= 1.0 - clamp);
    if (clipped) {
      ++out.clamp_hits;
      p = p < clamp ? clamp : 1.0 - clamp;
    }
    total += y == 1 ? -std::log(p) : -std::log1p(-p);
    if (clipped) continue;

    const double coeff = (p - static_cast<double>(y)) / (p * (1.0 - p)) * inv_n;
    for (std::size_t r = 0; r < k; ++r) {
      out.grad_left(r, c) = coeff * bm[r];
      out.grad_right(r, c) = coeff * btm[r];
      const double li = coeff * batch.left(r, c);
      for (std::size_t q = 0; q < k; ++q) out.grad_b(r, q) += li * batch.right(q, c);
    }
  }
  out.value = total * inv_n;
  return out;
}

VolLoss loss_vol(const Matrix& m_batch, double lambda, double ridge) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  VolLoss out;
  out.grad = Matrix(m_batch.rows(), m_batch.cols());
  if (lambda == 0.0) return out;
  LogDetGram ld = logdet_gram(m_batch, ridge);
  out.value = -lambda * ld.value;
  out.grad = std::move(ld.grad);
  for (double& v : out.grad.data()) v *= -lambda;
  return out;
}

Matrix grad_bprime(const Matrix& grad_b, const Matrix& b) {
  if (grad_b.rows() != b.rows() || grad_b.cols() != b.cols()) {
    throw ShapeError("grad_bprime: shape mismatch");
  }
  Matrix out = grad_b;
  auto o = out.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i] * (1.0 - bv[i]);
  return out;
}

}  // namespace dcc
