#include "ascan/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ascan/random.hpp"

namespace ascan {

namespace {

void require_double(const Tensor& t) {
  if (t.dtype() != DType::kFloat64) throw std::invalid_argument("grad_check runs in double precision");
}

void update(GradCheckReport& r, double analytic, double numeric, const std::string& where) {
  const double abs_err = std::abs(analytic - numeric);
  const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  r.max_abs_error = std::max(r.max_abs_error, abs_err);
  if (rel >= r.max_rel_error) {
    r.max_rel_error = rel;
    r.worst = where;
  }
  ++r.coordinates;
}

}  // namespace

GradCheckReport grad_check_leaves(const std::function<Tensor()>& loss, const std::vector<Tensor>& leaves,
                                  double tol, std::int64_t max_coords, std::uint64_t seed, double step) {
  for (const auto& t : leaves) require_double(t);
  for (auto t : leaves) t.zero_grad();
  Tensor value = loss();
  value.backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : leaves) {
    Tensor g = t.grad();
    analytic.push_back(g.defined() ? g.to_vector() : std::vector<double>(t.numel(), 0.0));
  }

  GradCheckReport report;
  Rng rng(seed);
  NoGradGuard no_grad;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    std::vector<std::int64_t> coords;
    if (max_coords > 0 && leaf.numel() > max_coords) {
      auto perm = rng.permutation(leaf.numel());
      coords.assign(perm.begin(), perm.begin() + max_coords);
    } else {
      for (std::int64_t i = 0; i < leaf.numel(); ++i) coords.push_back(i);
    }
    auto data = leaf.mutable_data<double>();
    for (auto i : coords) {
      const double orig = data[i];
      data[i] = orig + step;
      const double plus = loss().item();
      data[i] = orig - step;
      const double minus = loss().item();
      data[i] = orig;
      update(report, analytic[li][i], (plus - minus) / (2 * step),
             std::to_string(li) + "[" + std::to_string(i) + "]");
    }
  }
  for (auto t : leaves) t.zero_grad();
  report.passed = report.max_rel_error <= tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double tol, double step) {
  require_double(point);
  Tensor x = point.clone();
  x.set_requires_grad(true);
  return grad_check_leaves([&] { return f(x); }, {x}, tol, 0, 0, step);
}

}  // namespace ascan
