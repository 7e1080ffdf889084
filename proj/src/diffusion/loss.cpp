#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ascan/diffusion.hpp"

namespace ascan {

namespace {

bool all_finite(const Tensor& t) {
  for (double v : t.to_vector())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

Tensor diffusion_loss(const Denoiser& model, const Tensor& z, const Tensor& context, const NoiseSchedule& s,
                      Rng& rng, const LossOptions& opts) {
  if (z.dim() < 2) throw ShapeError("diffusion_loss expects [N, C, ...] latents, got " + shape_str(z.shape()));
  const std::int64_t n = z.size(0);
  std::vector<int> t(n);
  std::vector<double> tf(n);
  for (std::int64_t i = 0; i < n; ++i) {
    t[i] = static_cast<int>(rng.uniform_int(1, s.T));
    tf[i] = t[i];
  }
  // the target is all the noise that was added, offset included
  Tensor noise = randn(z.shape(), rng, z.dtype());
  if (opts.offset_noise != 0.0) {
    Shape eta_shape(z.dim(), 1);
    eta_shape[0] = n;
    eta_shape[1] = z.size(1);
    noise = noise + scale(randn(eta_shape, rng, z.dtype()), opts.offset_noise);
  }
  const Tensor z_t = q_sample(z, t, noise, s);

  Tensor ctx = context;
  const Tensor null = model.null_token();
  if (opts.p_uncond > 0.0 && null.defined()) {
    std::vector<double> drop(n);
    bool any = false;
    for (auto& d : drop) {
      d = rng.bernoulli(opts.p_uncond) ? 1.0 : 0.0;
      any = any || d != 0.0;
    }
    if (any) ctx = ctx + Tensor::from_vector({n, 1, 1}, drop, ctx.dtype()) * (null - ctx);
  }

  const Tensor pred = model.eps(z_t, tf, ctx, &rng);
  if (pred.shape() != z.shape())
    throw ShapeError("denoiser returned " + shape_str(pred.shape()) + " for latents " + shape_str(z.shape()));
  if (!all_finite(pred)) {
    std::ostringstream msg;
    msg << "non-finite noise prediction; timesteps";
    for (int v : t) msg << ' ' << v;
    msg << ", input finite: " << (all_finite(z_t) ? "yes" : "no");
    throw std::runtime_error(msg.str());
  }
  return mean(square(pred - noise));
}

}  // namespace ascan
