#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ascan/bench.hpp"

namespace ascan {

ClassifierTarget::ClassifierTarget(std::shared_ptr<ClassifierModel> model, int resolution, std::uint64_t seed)
    : model_(std::move(model)), resolution_(resolution), seed_(seed) {
  model_->set_training(false);
}

std::string ClassifierTarget::id() const { return model_->spec().name; }

std::string ClassifierTarget::spec_hash() const { return ascan::spec_hash(model_->spec()); }

void ClassifierTarget::prepare(int batch) {
  Rng rng(seed_);
  input_ = Tensor();  // release the previous batch first
  input_ = randn({batch, model_->spec().input_channels, resolution_, resolution_}, rng);
}

void ClassifierTarget::run() {
  NoGradGuard no_grad;
  model_->forward(input_);
}

SpinTarget::SpinTarget(std::string id, double overhead_us, double per_sample_us, double first_call_factor)
    : id_(std::move(id)), overhead_us_(overhead_us), per_sample_us_(per_sample_us), first_factor_(first_call_factor) {}

void SpinTarget::prepare(int batch) {
  batch_ = batch;
  first_ = true;
}

void SpinTarget::run() {
  double us = overhead_us_ + per_sample_us_ * batch_;
  if (first_) us *= first_factor_;
  first_ = false;
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double, std::micro>(us);
  while (std::chrono::steady_clock::now() < until) {
  }
}

ConvStackTarget::ConvStackTarget(std::string id, int layers, int channels, int kernel, int size, std::uint64_t seed)
    : id_(std::move(id)), layers_(layers), channels_(channels), kernel_(kernel), size_(size) {
  if (layers < 1 || channels < 1 || size < 1 || (kernel != 1 && kernel != 3))
    throw std::invalid_argument("conv stack needs layers, channels, size >= 1 and kernel 1 or 3");
  Rng rng(seed);
  const double sd = std::sqrt(1.0 / (channels * kernel * kernel));
  for (int i = 0; i < layers; ++i) weights_.push_back(scale(randn({channels, channels, kernel, kernel}, rng), sd));
}

void ConvStackTarget::prepare(int batch) {
  Rng rng(7);
  input_ = randn({batch, channels_, size_, size_}, rng);
}

void ConvStackTarget::run() {
  NoGradGuard no_grad;
  Tensor h = input_;
  for (const auto& w : weights_) h = conv2d(h, w, std::nullopt, 1, kernel_ / 2);
}

CostReport ConvStackTarget::cost() const {
  CostReport r;
  r.name = id_;
  r.height = r.width = size_;
  for (int i = 0; i < layers_; ++i) {
    const std::int64_t p = std::int64_t(channels_) * channels_ * kernel_ * kernel_;
    const std::int64_t m = conv_macs(size_, size_, channels_, channels_, kernel_);
    r.entries.push_back({"layer" + std::to_string(i), "conv", p, m});
    r.total_params += p;
    r.total_macs += m;
  }
  return r;
}

}  // namespace ascan
