#include <cmath>
#include <stdexcept>

#include "ascan/diffusion.hpp"

namespace ascan {

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > T) throw std::out_of_range("step " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  return t == 0 ? 1.0 : alpha_bars[t - 1];
}

double NoiseSchedule::sigma(int t) const {
  const double ab = alpha_bar(t);
  return std::sqrt((1.0 - ab) / ab);
}

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1))
    throw std::invalid_argument("schedule needs 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.kind = kind;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(T);
  for (int i = 0; i < T; ++i) {
    // a single step sits at the end of the range
    const double f = T == 1 ? 1.0 : static_cast<double>(i) / (T - 1);
    if (kind == ScheduleKind::kLinear) {
      s.betas[i] = beta_start + (beta_end - beta_start) * f;
    } else {
      const double r = std::sqrt(beta_start) + (std::sqrt(beta_end) - std::sqrt(beta_start)) * f;
      s.betas[i] = r * r;
    }
  }
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    s.alphas.push_back(1.0 - s.betas[i]);
    prod *= s.alphas.back();
    s.alpha_bars.push_back(prod);
  }
  return s;
}

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_end) {
  return make_schedule(T, kind, kind == ScheduleKind::kLinear ? 1e-4 : 8.5e-4, beta_end);
}

double beta_end_for_resolution(int resolution) {
  if (resolution <= 0) throw std::invalid_argument("resolution must be positive");
  return resolution >= 512 ? 0.02 : 0.01;
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "scaled_linear") return ScheduleKind::kScaledLinear;
  throw std::invalid_argument("unknown schedule kind '" + name + "' (linear | scaled_linear)");
}

Tensor q_sample(const Tensor& z, const std::vector<int>& t, const Tensor& eps, const NoiseSchedule& s,
                double offset_noise, Rng* rng) {
  if (z.shape() != eps.shape())
    throw ShapeError("q_sample: eps " + shape_str(eps.shape()) + " does not match z " + shape_str(z.shape()));
  if (z.dim() < 2) throw ShapeError("q_sample expects [N, C, ...], got " + shape_str(z.shape()));
  const std::int64_t n = z.size(0);
  if (static_cast<std::int64_t>(t.size()) != n)
    throw std::invalid_argument("q_sample: " + std::to_string(t.size()) + " steps for a batch of " +
                                std::to_string(n));
  Shape coef_shape(z.dim(), 1);
  coef_shape[0] = n;
  std::vector<double> a(n), b(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double ab = s.alpha_bar(t[i]);
    a[i] = std::sqrt(ab);
    b[i] = std::sqrt(1.0 - ab);
  }
  Tensor noise = eps;
  if (offset_noise != 0.0) {
    if (!rng) throw std::invalid_argument("q_sample: offset noise needs a generator");
    Shape eta_shape(z.dim(), 1);
    eta_shape[0] = n;
    eta_shape[1] = z.size(1);
    noise = eps + scale(randn(eta_shape, *rng, z.dtype()), offset_noise);
  }
  return Tensor::from_vector(coef_shape, a, z.dtype()) * z + Tensor::from_vector(coef_shape, b, z.dtype()) * noise;
}

Tensor q_sample(const Tensor& z, int t, const Tensor& eps, const NoiseSchedule& s, double offset_noise, Rng* rng) {
  return q_sample(z, std::vector<int>(z.dim() ? z.size(0) : 0, t), eps, s, offset_noise, rng);
}

}  // namespace ascan
