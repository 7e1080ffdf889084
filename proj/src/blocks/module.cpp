#include "ascan/module.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace ascan {

namespace {

Rng& need_rng(const InitContext& c) {
  if (!c.rng) throw std::logic_error("InitContext without a generator");
  return *c.rng;
}

}  // namespace

Tensor InitContext::zeros(const Shape& s) const { return meta ? Tensor::meta(s, dtype) : Tensor::zeros(s, dtype); }

Tensor InitContext::ones(const Shape& s) const { return meta ? Tensor::meta(s, dtype) : Tensor::ones(s, dtype); }

Tensor InitContext::normal(const Shape& s, double stddev) const {
  if (meta) return Tensor::meta(s, dtype);
  Rng& rng = need_rng(*this);
  Tensor t = Tensor::empty(s, dtype);
  dispatch(dtype, [&]<typename T>() {
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(rng.normal(0.0, stddev));
  });
  return t;
}

Tensor InitContext::truncated_normal(const Shape& s, double stddev) const {
  if (meta) return Tensor::meta(s, dtype);
  Rng& rng = need_rng(*this);
  Tensor t = Tensor::empty(s, dtype);
  dispatch(dtype, [&]<typename T>() {
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(rng.truncated_normal(stddev));
  });
  return t;
}

Tensor Module::add_parameter(const std::string& name, Tensor value) {
  if (!value.is_meta()) value.set_requires_grad(true);
  params_.emplace_back(name, value);
  return value;
}

Tensor Module::add_buffer(const std::string& name, Tensor value) {
  buffers_.emplace_back(name, value);
  return value;
}

void Module::collect(const std::string& prefix, bool buffers, std::vector<NamedTensor>& out) const {
  for (const auto& [name, t] : buffers ? buffers_ : params_) out.push_back({prefix + name, t});
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", buffers, out);
}

std::vector<NamedTensor> Module::named_parameters() const {
  std::vector<NamedTensor> out;
  collect("", false, out);
  return out;
}

std::vector<NamedTensor> Module::named_buffers() const {
  std::vector<NamedTensor> out;
  collect("", true, out);
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.value);
  return out;
}

std::int64_t Module::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& nt : named_parameters()) n += nt.value.numel();
  return n;
}

void Module::set_training(bool training) {
  training_ = training;
  for (auto& [name, child] : children_) child->set_training(training);
}

std::vector<NamedTensor> Module::state() const {
  auto out = named_parameters();
  for (auto& b : named_buffers()) out.push_back(b);
  return out;
}

std::vector<std::string> Module::load_state(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.value;
  std::vector<std::string> missing;
  for (auto& [name, dst] : state()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      missing.push_back(name);
      continue;
    }
    const Tensor& src = *it->second;
    if (src.shape() != dst.shape() || src.dtype() != dst.dtype())
      throw std::invalid_argument("state entry " + name + " has shape " + shape_str(src.shape()) + "/" +
                                  dtype_name(src.dtype()) + ", model expects " + shape_str(dst.shape()) + "/" +
                                  dtype_name(dst.dtype()));
    Tensor target = dst;
    dispatch(dst.dtype(), [&]<typename T>() {
      auto s = src.data<T>();
      std::copy(s.begin(), s.end(), target.mutable_data<T>().begin());
    });
  }
  return missing;
}

Conv2d::Conv2d(const InitContext& init, int in, int out, int kernel, int stride, bool bias)
    : stride_(stride), padding_(kernel / 2) {
  weight_ = add_parameter("weight", init.normal({out, in, kernel, kernel}, std::sqrt(2.0 / (kernel * kernel * out))));
  if (bias) bias_ = add_parameter("bias", init.zeros({out}));
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight_, bias_, stride_, padding_); }

void Conv2d::zero_() {
  for (Tensor t : parameters())
    dispatch(t.dtype(), [&]<typename T>() {
      for (auto& v : t.mutable_data<T>()) v = T(0);
    });
}

Linear::Linear(const InitContext& init, int in, int out, bool bias) {
  weight_ = add_parameter("weight", init.truncated_normal({out, in}, 0.02));
  if (bias) bias_ = add_parameter("bias", init.zeros({out}));
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight_, bias_); }

void Linear::zero_() {
  for (Tensor t : parameters())
    dispatch(t.dtype(), [&]<typename T>() {
      for (auto& v : t.mutable_data<T>()) v = T(0);
    });
}

BatchNorm2d::BatchNorm2d(const InitContext& init, int channels, double eps, double momentum) : eps_(eps) {
  gamma_ = add_parameter("weight", init.ones({channels}));
  beta_ = add_parameter("bias", init.zeros({channels}));
  state_.running_mean = add_buffer("running_mean", init.zeros({channels}));
  state_.running_var = add_buffer("running_var", init.ones({channels}));
  state_.momentum = momentum;
}

Tensor BatchNorm2d::forward(const Tensor& x) const {
  // training mode also updates the running-statistic buffers in place
  return batch_norm(x, gamma_, beta_, state_, training(), eps_);
}

LayerNorm::LayerNorm(const InitContext& init, int dim, double eps) : eps_(eps) {
  gamma_ = add_parameter("weight", init.ones({dim}));
  beta_ = add_parameter("bias", init.zeros({dim}));
}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma_, beta_, eps_); }

}  // namespace ascan
