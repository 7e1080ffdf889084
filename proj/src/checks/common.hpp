#pragma once

#include <cstdio>
#include <string>

#include "ascan/checks.hpp"
#include "ascan/module.hpp"
#include "ascan/random.hpp"

namespace ascan::checks_detail {

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a...);
  return buf;
}

inline Tensor rnd(const Shape& s, std::uint64_t seed, double scale = 1.0, DType dt = DType::kFloat64) {
  Rng rng(seed);
  Tensor t = randn(s, rng, DType::kFloat64);
  if (scale != 1.0) t = ascan::scale(t, scale);
  return t.to(dt);
}

// Every parameter and buffer random so no identity holds by accident of
// initialization; running variances stay positive.
inline void randomize(Module& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& nt : m.state()) {
    const bool positive = nt.name.find("running_var") != std::string::npos;
    dispatch(nt.value.dtype(), [&]<typename T>() {
      for (auto& x : nt.value.mutable_data<T>()) x = static_cast<T>(positive ? 0.5 + rng.uniform() : 0.3 * rng.normal());
    });
  }
}

inline Tensor named(const Module& m, const std::string& name) {
  for (const auto& nt : m.state())
    if (nt.name == name) return nt.value;
  throw std::runtime_error("no tensor named " + name);
}

inline void fill(Tensor t, double v) {
  dispatch(t.dtype(), [&]<typename T>() {
    for (auto& x : t.mutable_data<T>()) x = static_cast<T>(v);
  });
}

}  // namespace ascan::checks_detail
