#include <cmath>

#include "ascan/blocks.hpp"
#include "common.hpp"

namespace ascan {

using checks_detail::fill;
using checks_detail::fmt;
using checks_detail::named;
using checks_detail::randomize;
using checks_detail::rnd;

namespace {

std::vector<double> rows_dot(const Tensor& a, const Tensor& b, int d) {
  const auto x = a.to_vector(), y = b.to_vector();
  std::vector<double> out(x.size() / d, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i / d] += x[i] * y[i];
  return out;
}

double worst_rms_deviation(const Tensor& t) {
  const auto v = t.to_vector();
  const auto d = t.size(t.dim() - 1);
  double worst = 0;
  for (std::size_t r = 0; r < v.size() / d; ++r) {
    double s = 0;
    for (int i = 0; i < d; ++i) s += v[r * d + i] * v[r * d + i];
    worst = std::max(worst, std::abs(std::sqrt(s / d) - 1.0));
  }
  return worst;
}

}  // namespace

CheckSuite check_rope() {
  CheckSuite s{"rope", {}};
  const int d = 32;
  for (DType dt : {DType::kFloat32, DType::kFloat64}) {
    const std::string tag = dt == DType::kFloat32 ? " float32" : " float64";
    std::vector<TokenPos> pos, shifted;
    for (int i = 0; i < 12; ++i) {
      pos.push_back({i * 3 - 7, 40 - i * 5});
      shifted.push_back({i * 3 - 7 + 13, 40 - i * 5 - 29});
    }
    const Tensor u = rnd({12, d}, 91, 1.0, dt), v = rnd({12, d}, 92, 1.0, dt);
    // norm preservation, relative to the row norm
    const auto n0 = rows_dot(u, u, d), n1 = rows_dot(rope_rotate(u, pos), rope_rotate(u, pos), d);
    double worst = 0;
    for (std::size_t i = 0; i < n0.size(); ++i) worst = std::max(worst, std::abs(std::sqrt(n1[i]) - std::sqrt(n0[i])) / std::sqrt(n0[i]));
    s.items.push_back({"norm preservation" + tag, worst <= 1e-5, fmt("max rel change %.2e", worst)});
    // <R(p)u, R(q)v> depends on p - q only: compare against every token moved by one offset
    const auto a = rows_dot(rope_rotate(u, pos), rope_rotate(v, std::vector<TokenPos>(pos.rbegin(), pos.rend())), d);
    const auto b = rows_dot(rope_rotate(u, shifted),
                            rope_rotate(v, std::vector<TokenPos>(shifted.rbegin(), shifted.rend())), d);
    worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
    s.items.push_back({"relative-offset invariance" + tag, worst <= 1e-5, fmt("max deviation %.2e", worst)});

    Rng rng(78);
    BlockOptions o;
    o.in_channels = o.out_channels = 16;
    o.heads = 2;
    o.rope = o.qk_norm = true;
    TBlock b16(InitContext{&rng, dt, false}, o);
    const Tensor x = rnd({1, 16, 3, 4}, 79, 1.0, dt);
    const auto l0 = b16.probe_self_attention(x).logits.to_vector();
    const auto l1 = b16.probe_self_attention(x, {7, -3}).logits.to_vector();
    worst = 0;
    for (std::size_t i = 0; i < l0.size(); ++i) worst = std::max(worst, std::abs(l0[i] - l1[i]));
    s.items.push_back({"attention logits under a grid shift" + tag, worst <= 1e-5, fmt("max abs diff %.2e", worst)});

    randomize(b16, 81);
    fill(named(b16, "qk_norm.q_gain"), 1.0);
    fill(named(b16, "qk_norm.k_gain"), 1.0);
    const auto p = b16.probe_self_attention(rnd({2, 16, 3, 3}, 82, 5.0, dt));
    const double dq = worst_rms_deviation(p.q), dk = worst_rms_deviation(p.k);
    s.items.push_back({"qk-rmsnorm unit rms" + tag, std::max(dq, dk) <= 1e-5, fmt("q %.2e k %.2e", dq, dk)});
  }
  return s;
}

}  // namespace ascan
