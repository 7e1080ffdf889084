#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ascan/tensor.hpp"

namespace ascan {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::int64_t coordinates = 0;
  std::string worst;  // "<tensor index>[<flat index>]" of the worst coordinate
  bool passed = false;
};

/// Compares autodiff against central differences (step h) for a scalar
/// function of one double-precision tensor. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-4).
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double tol, double step = 1e-5);

/// Same check over leaf tensors captured by `loss` (e.g. model parameters),
/// perturbed in place. When a tensor has more than `max_coords` entries a
/// seeded subset is checked.
GradCheckReport grad_check_leaves(const std::function<Tensor()>& loss,
                                  const std::vector<Tensor>& leaves, double tol,
                                  std::int64_t max_coords = 0, std::uint64_t seed = 0,
                                  double step = 1e-5);

}  // namespace ascan
