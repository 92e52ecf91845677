#include "dcc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "dcc/error.hpp"

namespace dcc {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Pivots below this fraction of the original diagonal are treated as zero.
constexpr double kPivotRelTol = 64.0 * std::numeric_limits<double>::epsilon();

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  if (!all_finite()) throw DataError("matrix data contains non-finite entries");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ProbVector::ProbVector(std::vector<double> entries) : entries_(std::move(entries)) {
  double sum = 0.0;
  for (double v : entries_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("probability entry negative or non-finite");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw DataError("probability vector sums to " + std::to_string(sum));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b));
  }
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.row(k).data();
    const double* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      double* crow = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
  }
  Matrix c(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < inner; ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

ProbVector softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return ProbVector(std::move(out), ProbVector::Unchecked{});
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return ProbVector(std::move(out), ProbVector::Unchecked{});
}

void softmax_columns(Matrix& logits) {
  const std::size_t k = logits.rows();
  const std::size_t n = logits.cols();
  if (k == 0) return;
  std::vector<double> mx(logits.row(0).begin(), logits.row(0).end());
  for (std::size_t r = 1; r < k; ++r) {
    auto row = logits.row(r);
    for (std::size_t j = 0; j < n; ++j) mx[j] = std::max(mx[j], row[j]);
  }
  std::vector<double> sum(n, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    auto row = logits.row(r);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx[j]);
      sum[j] += row[j];
    }
  }
  for (std::size_t r = 0; r < k; ++r) {
    auto row = logits.row(r);
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum[j];
  }
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

CholeskyFactor::CholeskyFactor(const Matrix& g) : lower_(g.rows(), g.cols()) {
  if (g.rows() != g.cols()) throw ShapeError("cholesky: " + shape_str(g) + " is not square");
  const std::size_t n = g.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = g(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= lower_(j, k) * lower_(j, k);
    if (!(d > kPivotRelTol * std::abs(g(j, j))) || !std::isfinite(d)) {
      throw SingularityError("matrix is not positive definite", j);
    }
    const double ljj = std::sqrt(d);
    lower_(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = g(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower_(i, k) * lower_(j, k);
      lower_(i, j) = s / ljj;
    }
  }
}

double CholeskyFactor::log_det() const noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < lower_.rows(); ++i) s += std::log(lower_(i, i));
  return 2.0 * s;
}

Matrix CholeskyFactor::solve(const Matrix& rhs) const {
  const std::size_t n = lower_.rows();
  if (rhs.rows() != n) {
    throw ShapeError("cholesky solve: factor " + shape_str(lower_) + ", rhs " + shape_str(rhs));
  }
  Matrix x = rhs;
  const std::size_t m = rhs.cols();
  // L·y = rhs
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t k = 0; k < i; ++k) {
      const double l = lower_(i, k);
      auto xk = x.row(k);
      for (std::size_t c = 0; c < m; ++c) xi[c] -= l * xk[c];
    }
    const double d = lower_(i, i);
    for (std::size_t c = 0; c < m; ++c) xi[c] /= d;
  }
  // Lᵀ·x = y
  for (std::size_t ii = n; ii-- > 0;) {
    auto xi = x.row(ii);
    for (std::size_t k = ii + 1; k < n; ++k) {
      const double l = lower_(k, ii);
      auto xk = x.row(k);
      for (std::size_t c = 0; c < m; ++c) xi[c] -= l * xk[c];
    }
    const double d = lower_(ii, ii);
    for (std::size_t c = 0; c < m; ++c) xi[c] /= d;
  }
  return x;
}

Matrix cholesky_solve(const Matrix& g, const Matrix& rhs) { return CholeskyFactor(g).solve(rhs); }

LogDetGram logdet_gram(const Matrix& m, double ridge) {
  if (ridge < 0.0) throw ConfigError("logdet_gram: ridge must be nonnegative");
  Matrix g = matmul_nt(m, m);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += ridge;
  const CholeskyFactor chol(g);
  LogDetGram out;
  out.value = chol.log_det();
  out.grad = chol.solve(m);
  for (double& v : out.grad.data()) v *= 2.0;
  return out;
}

}  // namespace dcc
