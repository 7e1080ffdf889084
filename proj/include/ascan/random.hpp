#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ascan/tensor.hpp"

namespace ascan {

/// Seeded generator passed explicitly wherever randomness is consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform();                             // [0, 1)
  double normal(double mean = 0.0, double stddev = 1.0);
  double truncated_normal(double stddev, double bound = 2.0);  // |x| <= bound*stddev
  double beta(double a, double b);
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive
  bool bernoulli(double p);
  std::vector<std::int64_t> permutation(std::int64_t n);
  /// Derives an independent child seed; used to fork streams per component.
  std::uint64_t next_seed() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

Tensor randn(const Shape& shape, Rng& rng, DType dtype = DType::kFloat32);
Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi, DType dtype = DType::kFloat32);

}  // namespace ascan
