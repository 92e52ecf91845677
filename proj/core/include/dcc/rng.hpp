#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace dcc {

// Portable seeded generator, algorithm tag "dcc-rng-v1".
//
// Engine: std::mt19937_64 (its output sequence is fixed by the C++ standard),
// seeded with splitmix64(seed). Conversions are implemented here rather than
// with <random> distributions, whose outputs vary across standard libraries:
//   uniform01     (x >> 11) * 2^-53
//   uniform_index rejection sampling on the low bits, unbiased
//   normal        Box-Muller, caching the second variate
//   shuffle       Fisher-Yates from the back, using uniform_index(i + 1)
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "dcc-rng-v1";

  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Derives an independent stream seed from a base seed and a purpose tag.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) noexcept;

}  // namespace dcc
