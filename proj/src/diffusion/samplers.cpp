#include <cmath>
#include <stdexcept>

#include "ascan/diffusion.hpp"

namespace ascan {

namespace {

Tensor axpy(const Tensor& x, double a, const Tensor& d) { return x + scale(d, a); }

std::vector<double> axpy(const std::vector<double>& x, double a, const std::vector<double>& d) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * d[i];
  return out;
}

// One predictor-corrector step from s0 to s1; plain Euler when `euler`.
template <typename X, typename F>
X heun_step(const F& f, const X& x, double s0, double s1, bool euler) {
  const double h = s1 - s0;
  const X d = f(x, 0);
  X pred = axpy(x, h, d);
  if (euler) return pred;
  const X d2 = f(pred, 1);
  return axpy(axpy(x, 0.5 * h, d), 0.5 * h, d2);
}

// Guided noise prediction for one sampling step.
class GuidedEps {
 public:
  GuidedEps(const Denoiser& m, const SampleRequest& req) : model_(m), req_(req) {
    if (!req.context.defined() || req.context.dim() != 3 || req.context.size(0) != req.shape.at(0))
      throw ShapeError("sampling context must be [N, Lc, Dc] with N = " + std::to_string(req.shape.at(0)));
    if (req.guidance) {
      const Tensor null = m.null_token();
      if (!null.defined()) throw std::invalid_argument("guidance needs a denoiser with an unconditional token");
      uncond_ = null + Tensor::zeros({req.shape.at(0), 1, null.size(2)}, null.dtype());
    }
  }

  Tensor operator()(const Tensor& z, int t, int step, int total) const {
    const std::vector<double> tv(static_cast<std::size_t>(z.size(0)), static_cast<double>(t));
    Tensor cond = model_.eps(z, tv, req_.context, nullptr);
    if (!req_.guidance) return cond;
    const double s = guidance_at(*req_.guidance, step, total);
    if (s == 1.0) return cond;  // cfg_combine would return cond unchanged
    return cfg_combine(cond, model_.eps(z, tv, uncond_, nullptr), s);
  }

 private:
  const Denoiser& model_;
  const SampleRequest& req_;
  Tensor uncond_;
};

Tensor initial_noise(const SampleRequest& req, Rng& rng) {
  if (req.initial_noise) {
    if (req.initial_noise->shape() != req.shape) throw ShapeError("initial noise shape mismatch");
    return *req.initial_noise;
  }
  return randn(req.shape, rng, req.context.dtype());
}

void check_steps(const NoiseSchedule& s, int steps, int min_steps) {
  if (steps < min_steps || steps > s.T)
    throw std::invalid_argument("sampling steps " + std::to_string(steps) + " outside [" + std::to_string(min_steps) +
                                ", " + std::to_string(s.T) + "]");
}

}  // namespace

std::vector<int> sampling_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) throw std::invalid_argument("need 1 <= steps <= T");
  std::vector<int> out;
  if (steps == 1) return {T};
  const double d = static_cast<double>(T - 1) / (steps - 1);
  for (int k = 0; k < steps; ++k) out.push_back(T - static_cast<int>(std::lround(k * d)));
  return out;
}

Tensor sample_ddpm(const Denoiser& model, const NoiseSchedule& s, const SampleRequest& req) {
  check_steps(s, req.steps, 1);
  NoGradGuard no_grad;
  Rng rng(req.seed);
  GuidedEps eps(model, req);
  const auto ts = sampling_timesteps(s.T, req.steps);
  Tensor z = initial_noise(req, rng);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k], prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(prev);
    const double beta = 1.0 - ab / ab_prev;  // effective beta of the respaced step
    const Tensor e = eps(z, t, static_cast<int>(k) + 1, req.steps);
    const Tensor x0 = scale(z - scale(e, std::sqrt(1.0 - ab)), 1.0 / std::sqrt(ab));
    if (prev == 0) {
      z = x0;
      break;
    }
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
    z = scale(x0, c0) + scale(z, ct) + scale(randn(req.shape, rng, z.dtype()), std::sqrt(var));
  }
  return z;
}

Tensor sample_heun(const Denoiser& model, const NoiseSchedule& s, const SampleRequest& req) {
  check_steps(s, req.steps, 2);
  NoGradGuard no_grad;
  Rng rng(req.seed);
  GuidedEps eps(model, req);
  const auto ts = sampling_timesteps(s.T, req.steps);
  // x = z / sqrt(ab) = x0 + sigma * eps, so dx/dsigma = eps
  Tensor x = scale(initial_noise(req, rng), std::sqrt(1.0 + s.sigma(ts[0]) * s.sigma(ts[0])));
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t0 = ts[k], t1 = k + 1 < ts.size() ? ts[k + 1] : 0;
    const double s0 = s.sigma(t0), s1 = s.sigma(t1);
    const int step = static_cast<int>(k) + 1;
    auto f = [&](const Tensor& xi, int which) {
      const int t = which == 0 ? t0 : t1;
      const double sig = which == 0 ? s0 : s1;
      return eps(scale(xi, 1.0 / std::sqrt(1.0 + sig * sig)), t, step, req.steps);
    };
    x = heun_step(f, x, s0, s1, t1 == 0);
  }
  return x;
}

std::vector<double> heun_integrate(const std::function<std::vector<double>(const std::vector<double>&, double)>& f,
                                   std::vector<double> x, double s0, double s1, int n) {
  if (n < 1) throw std::invalid_argument("heun_integrate needs n >= 1");
  const double h = (s1 - s0) / n;
  for (int i = 0; i < n; ++i) {
    const double a = s0 + i * h, b = s0 + (i + 1) * h;
    x = heun_step([&](const std::vector<double>& xi, int which) { return f(xi, which == 0 ? a : b); }, x, a, b,
                  false);
  }
  return x;
}

}  // namespace ascan
