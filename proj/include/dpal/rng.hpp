#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace dpal {

// Deterministic random stream: xoshiro256++ seeded through splitmix64.
// Fixed algorithm and constants, so equal seeds give equal draw sequences on
// every platform. A stream is single-owner; do not share one across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53 random bits.
  double uniform();

  // Uniform integer on [0, bound) by masked rejection; bound >= 1.
  std::uint64_t uniform_int(std::uint64_t bound);

  // Standard normal via Box-Muller; draws are consumed in pairs.
  double normal();

  // Laplace with the given scale (mean zero).
  double laplace(double scale);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  // k distinct indices drawn uniformly from 0..n-1 (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

 private:
  std::uint64_t state_[4];
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

}  // namespace dpal
