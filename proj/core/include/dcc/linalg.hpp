#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace dcc {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Takes ownership of row-major data; throws ShapeError on a length mismatch
  // and DataError on non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::vector<double> col(std::size_t c) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A point on the probability simplex: nonnegative entries summing to one.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  // Validates the simplex invariant; throws DataError otherwise.
  explicit ProbVector(std::vector<double> entries);

  std::size_t dim() const noexcept { return entries_.size(); }
  double operator[](std::size_t i) const noexcept { return entries_[i]; }
  std::span<const double> entries() const noexcept { return entries_; }

 private:
  struct Unchecked {};
  ProbVector(std::vector<double> entries, Unchecked) : entries_(std::move(entries)) {}
  friend ProbVector softmax(std::span<const double> logits);

  std::vector<double> entries_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

ProbVector softmax(std::span<const double> logits);
// Column-wise softmax, in place.
void softmax_columns(Matrix& logits);

double sigmoid(double x) noexcept;

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
class CholeskyFactor {
 public:
  // Throws SingularityError carrying the first non-positive pivot.
  explicit CholeskyFactor(const Matrix& g);

  const Matrix& lower() const noexcept { return lower_; }
  double log_det() const noexcept;
  Matrix solve(const Matrix& rhs) const;

 private:
  Matrix lower_;
};

Matrix cholesky_solve(const Matrix& g, const Matrix& rhs);

struct LogDetGram {
  double value = 0.0;
  Matrix grad;  // d value / d m, same shape as m
};

// log det(m·mᵀ + ridge·I) and its gradient 2·G⁻¹·m.
LogDetGram logdet_gram(const Matrix& m, double ridge);

}  // namespace dcc
