#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dcc/linalg.hpp"

namespace dcc {

// Memberships of the two endpoints of B annotated pairs, column b of each
// block belonging to pair b.
struct PairBatch {
  Matrix left;   // K × B
  Matrix right;  // K × B
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
};

struct LossValue {
  double cc = 0.0;
  double vol = 0.0;
  double total = 0.0;
  std::size_t clamp_hits = 0;
};

struct CcLoss {
  double value = 0.0;
  Matrix grad_left;
  Matrix grad_right;
  Matrix grad_b;
  std::size_t clamp_hits = 0;
};

inline constexpr double kDefaultClamp = 1e-6;
inline constexpr double kDefaultRidge = 1e-8;

// Mean logistic pair loss with p = clip(m_iᵀ·b·m_j, clamp, 1 − clamp).
// Pairs whose raw p falls outside [clamp, 1 − clamp] contribute their clipped
// value but no gradient.
CcLoss loss_cc(const PairBatch& batch, const Matrix& b, double clamp = kDefaultClamp);

struct VolLoss {
  double value = 0.0;
  Matrix grad;
};

// −λ·log det(m·mᵀ + ridge·I). λ = 0 short-circuits to an exact zero.
VolLoss loss_vol(const Matrix& m_batch, double lambda, double ridge = kDefaultRidge);

// Chain rule through B = sigmoid(B′): grad_b ⊙ b ⊙ (1 − b).
Matrix grad_bprime(const Matrix& grad_b, const Matrix& b);

}  // namespace dcc
