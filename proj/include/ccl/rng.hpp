#pragma once

#include <cstdint>
#include <random>

namespace ccl {

// Deterministic random stream. The raw engine is mt19937_64 (its output
// sequence is fixed by the standard); the derived draws below avoid
// std::*_distribution so that results are reproducible across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased draw in [0, n), n >= 1.
  std::uint64_t below(std::uint64_t n);

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01();

  // Standard normal via Box-Muller; the paired value is cached.
  double gaussian();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ccl
