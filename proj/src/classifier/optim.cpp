#include <cmath>
#include <stdexcept>

#include "ascan/optim.hpp"

namespace ascan {

namespace {

template <typename F>
void each_value(Tensor& t, F&& f) {
  dispatch(t.dtype(), [&]<typename T>() {
    auto d = t.mutable_data<T>();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(f(i, static_cast<double>(d[i])));
  });
}

}  // namespace

AdamW::AdamW(std::vector<NamedTensor> params, double beta1, double beta2, double weight_decay, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), wd_(weight_decay), eps_(eps) {
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw std::invalid_argument("AdamW betas must lie in [0, 1)");
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.value.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.value.numel()), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor p = params_[k].value;
    const Tensor g = p.grad();
    const std::vector<double> grad = g.defined() ? g.to_vector() : std::vector<double>(m_[k].size(), 0.0);
    const double decay = p.dim() >= 2 ? 1.0 - lr * wd_ : 1.0;
    auto& m = m_[k];
    auto& v = v_[k];
    each_value(p, [&](std::size_t i, double w) {
      m[i] = beta1_ * m[i] + (1 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1 - beta2_) * grad[i] * grad[i];
      return w * decay - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    });
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

double grad_norm(const std::vector<Tensor>& params) {
  double s = 0;
  for (const auto& p : params) {
    const Tensor g = p.grad();
    if (!g.defined()) continue;
    for (double x : g.to_vector()) s += x * x;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const double f = max_norm / norm;
    for (const auto& p : params) {
      Tensor g = p.grad();
      if (!g.defined()) continue;
      each_value(g, [f](std::size_t, double x) { return x * f; });
    }
  }
  return norm;
}

Ema::Ema(const Module& model, double decay) : decay_(decay) {
  if (decay < 0 || decay >= 1) throw std::invalid_argument("EMA decay must lie in [0, 1)");
  for (const auto& nt : model.named_parameters()) shadow_.push_back({nt.name, nt.value.detach().clone()});
  num_params_ = shadow_.size();
  for (const auto& nt : model.named_buffers()) shadow_.push_back({nt.name, nt.value.detach().clone()});
}

void Ema::update(const Module& model) {
  auto state = model.state();
  if (state.size() != shadow_.size()) throw std::logic_error("EMA model mismatch");
  for (std::size_t k = 0; k < state.size(); ++k) {
    const auto src = state[k].value.to_vector();
    const double d = k < num_params_ ? decay_ : 0.0;
    each_value(shadow_[k].value, [&](std::size_t i, double s) { return d * s + (1 - d) * src[i]; });
  }
}

void Ema::copy_to(Module& model) const {
  auto missing = model.load_state(shadow_);
  if (!missing.empty()) throw std::logic_error("EMA shadow lacks " + missing.front());
}

}  // namespace ascan
