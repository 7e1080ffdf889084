#pragma once

#include <cstdint>
#include <vector>

#include "ascan/module.hpp"

namespace ascan {

/// Decoupled-weight-decay Adam. Decay applies to parameters with two or
/// more dimensions (weights), never to biases, norm affines or gains.
class AdamW {
 public:
  AdamW(std::vector<NamedTensor> params, double beta1, double beta2, double weight_decay, double eps = 1e-8);
  /// Applies one update from the accumulated gradients; parameters without
  /// a gradient are treated as having a zero gradient.
  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return t_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, wd_, eps_;
  std::int64_t t_ = 0;
};

/// Global L2 norm of the gradients.
double grad_norm(const std::vector<Tensor>& params);
/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

/// Exponential moving average of a module's parameters; buffers are copied.
class Ema {
 public:
  Ema(const Module& model, double decay);
  void update(const Module& model);
  /// Writes the shadow values into `model` (same architecture).
  void copy_to(Module& model) const;
  const std::vector<NamedTensor>& shadow() const { return shadow_; }
  double decay() const { return decay_; }

 private:
  double decay_;
  std::vector<NamedTensor> shadow_;  // parameters, then buffers
  std::size_t num_params_;
};

}  // namespace ascan
