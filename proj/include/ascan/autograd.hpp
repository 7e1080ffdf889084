#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ascan/tensor.hpp"

namespace ascan::detail {

// Gradient function of one recorded operation. Receives the gradient of
// the op output and returns one gradient per input (undefined tensors for
// inputs that need none). Runs with graph recording disabled.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_output)>;

struct Node {
  std::string name;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

/// Attaches a gradient node to `output` when recording is on and any input
/// requires a gradient. Returns `output` for chaining.
Tensor record(Tensor output, const char* name, std::vector<Tensor> inputs, BackwardFn backward);

bool any_requires_grad(std::initializer_list<const Tensor*> inputs);

}  // namespace ascan::detail
