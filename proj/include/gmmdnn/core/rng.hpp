#pragma once

#include <cstdint>
#include <random>

namespace gmmdnn {

// Every stochastic routine draws from std::mt19937_64 streams. A stream is
// identified by (seed, stream, block); the three are mixed with SplitMix64 so
// that neighbouring ids give unrelated generator states. Normal variates come
// from std::normal_distribution, so bit-reproducibility holds per standard
// library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t block = 0);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t bits() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace gmmdnn
