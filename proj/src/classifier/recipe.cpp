#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ascan/classifier.hpp"

namespace ascan {

TrainRecipe paper_recipe(const std::string& variant) {
  TrainRecipe r;
  if (variant == "ascan-t")
    r.stochastic_depth = 0.3;
  else if (variant == "ascan-b")
    r.stochastic_depth = 0.4;
  else if (variant == "ascan-l")
    r.stochastic_depth = 0.5;
  else
    throw std::invalid_argument("no published recipe for '" + variant + "'");
  return r;
}

TrainRecipe toy_recipe() {
  TrainRecipe r;
  r.peak_lr = 3e-3;
  r.min_lr = 5e-6;
  r.warmup_start_lr = 5e-7;
  r.epochs = 30;
  r.warmup_epochs = 2;  // same 1:15 warmup ratio as 20 of 300
  r.batch_size = 32;
  r.mixup_alpha = 0.8;
  r.label_smoothing = 0.1;
  r.ema_decay = 0.99;
  r.stochastic_depth = 0.0;
  return r;
}

std::vector<std::string> check_recipe(const TrainRecipe& r) {
  std::vector<std::string> out;
  if (!(r.min_lr < r.peak_lr)) out.push_back("min_lr must be below peak_lr");
  if (r.warmup_start_lr < 0) out.push_back("warmup_start_lr must be nonnegative");
  if (r.label_smoothing < 0 || r.label_smoothing >= 1) out.push_back("label_smoothing must lie in [0, 1)");
  if (r.ema_decay < 0 || r.ema_decay >= 1) out.push_back("ema_decay must lie in [0, 1)");
  if (!(r.grad_clip_norm > 0)) out.push_back("grad_clip_norm must be positive");
  if (r.mixup_alpha < 0) out.push_back("mixup_alpha must be nonnegative");
  if (r.epochs < 0) out.push_back("epochs must be nonnegative");
  if (r.batch_size < 1) out.push_back("batch_size must be positive");
  if (r.warmup_epochs < 0 || r.warmup_epochs > r.epochs) out.push_back("warmup_epochs must lie in [0, epochs]");
  if (r.stochastic_depth < 0 || r.stochastic_depth >= 1) out.push_back("stochastic_depth must lie in [0, 1)");
  return out;
}

double lr_at(const TrainRecipe& r, std::int64_t step, std::int64_t steps_per_epoch) {
  const double warm = r.warmup_epochs * static_cast<double>(steps_per_epoch);
  const double last = static_cast<double>(r.epochs) * steps_per_epoch - 1;
  const double s = static_cast<double>(step);
  if (s < warm) return r.warmup_start_lr + (r.peak_lr - r.warmup_start_lr) * s / warm;
  const double progress = last > warm ? std::clamp((s - warm) / (last - warm), 0.0, 1.0) : 1.0;
  if (progress >= 1.0) return r.min_lr;
  return r.min_lr + 0.5 * (r.peak_lr - r.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

Tensor smoothed_targets(const std::vector<int>& labels, int num_classes, double eps, DType dtype) {
  const double off = eps / num_classes, on = 1.0 - eps + off;
  std::vector<double> v(labels.size() * num_classes, off);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw std::invalid_argument("label out of range");
    v[i * num_classes + labels[i]] = on;
  }
  return Tensor::from_vector({static_cast<std::int64_t>(labels.size()), num_classes}, v, dtype);
}

Tensor soft_cross_entropy(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) throw ShapeError("targets must match logits");
  return scale(sum(targets * log_softmax(logits, -1)), -1.0 / static_cast<double>(logits.size(0)));
}

MixedBatch mixup(const Tensor& images, const Tensor& targets, double alpha, Rng& rng) {
  MixedBatch out;
  const auto n = images.size(0);
  out.partner = rng.permutation(n);
  out.lambda = alpha > 0 ? rng.beta(alpha, alpha) : 1.0;
  const double l = out.lambda;
  out.images = scale(images, l) + scale(index_select(images, 0, out.partner), 1 - l);
  out.targets = scale(targets, l) + scale(index_select(targets, 0, out.partner), 1 - l);
  return out;
}

}  // namespace ascan
