#include "ascan/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ascan {

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

double Rng::truncated_normal(double stddev, double bound) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (;;) {
    double z = dist(engine_);
    if (std::abs(z) <= bound) return z * stddev;
  }
}

double Rng::beta(double a, double b) {
  if (a <= 0 || b <= 0) throw std::invalid_argument("beta parameters must be positive");
  double x = std::gamma_distribution<double>(a, 1.0)(engine_);
  double y = std::gamma_distribution<double>(b, 1.0)(engine_);
  return x / (x + y);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::vector<std::int64_t> Rng::permutation(std::int64_t n) {
  std::vector<std::int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with our own draws so the order is library-independent.
  for (std::int64_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[uniform_int(0, i)]);
  return idx;
}

Tensor randn(const Shape& shape, Rng& rng, DType dtype) {
  Tensor t = Tensor::empty(shape, dtype);
  dispatch(dtype, [&]<typename T>() {
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(rng.normal());
  });
  return t;
}

Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi, DType dtype) {
  Tensor t = Tensor::empty(shape, dtype);
  dispatch(dtype, [&]<typename T>() {
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
  });
  return t;
}

}  // namespace ascan
