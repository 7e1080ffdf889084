#include <algorithm>
#include <stdexcept>

#include "ascan/blocks.hpp"

namespace ascan {

Tensor stochastic_depth(const Tensor& branch, double rate, bool training, Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("drop rate must lie in [0, 1)");
  if (!training || rate == 0.0) return branch;
  if (!rng) throw std::invalid_argument("stochastic depth in training mode needs a generator");
  const auto n = branch.shape().at(0);
  Shape mask_shape(branch.dim(), 1);
  mask_shape[0] = n;
  std::vector<double> keep(static_cast<std::size_t>(n));
  for (auto& k : keep) k = rng->bernoulli(1.0 - rate) ? 1.0 / (1.0 - rate) : 0.0;
  return branch * Tensor::from_vector(mask_shape, keep, branch.dtype());
}

std::vector<double> drop_rate_ramp(double max_rate, int num_blocks) {
  std::vector<double> out(static_cast<std::size_t>(std::max(num_blocks, 0)), 0.0);
  if (num_blocks > 1)
    for (int i = 0; i < num_blocks; ++i) out[i] = max_rate * i / (num_blocks - 1);
  return out;
}

}  // namespace ascan
