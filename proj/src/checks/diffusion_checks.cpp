#include <cmath>

#include "ascan/diffusion.hpp"
#include "common.hpp"

namespace ascan {

using checks_detail::fmt;

namespace {

double sample_variance(const std::vector<double>& v) {
  double m = 0, q = 0;
  for (double x : v) m += x;
  m /= v.size();
  for (double x : v) q += (x - m) * (x - m);
  return q / (v.size() - 1);
}

// long-double running product of the same beta formula
double worst_product_error(ScheduleKind kind) {
  const auto s = make_schedule(1000, kind, 0.02);
  const long double bs = s.beta_start, be = 0.02;
  long double prod = 1.0L;
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const long double f = static_cast<long double>(i) / 999.0L;
    long double beta;
    if (kind == ScheduleKind::kLinear) {
      beta = bs + (be - bs) * f;
    } else {
      const long double r = sqrtl(bs) + (sqrtl(be) - sqrtl(bs)) * f;
      beta = r * r;
    }
    prod *= 1.0L - beta;
    worst = std::max(worst, static_cast<double>(fabsl(prod - s.alpha_bars[i])));
  }
  return worst;
}

}  // namespace

CheckSuite check_schedule() {
  CheckSuite s{"schedule", {}};
  for (auto kind : {ScheduleKind::kLinear, ScheduleKind::kScaledLinear}) {
    const double err = worst_product_error(kind);
    s.items.push_back({std::string("alpha_bars ") + (kind == ScheduleKind::kLinear ? "linear" : "scaled_linear"),
                       err <= 1e-12, fmt("max abs err %.2e vs extended precision", err)});
  }
  const auto sched = make_schedule(1000, ScheduleKind::kLinear, 0.02);
  Rng rng(1);
  const Tensor z = randn({1000, 4, 5, 5}, rng, DType::kFloat64), eps = randn({1000, 4, 5, 5}, rng, DType::kFloat64);
  const double band = 3 * std::sqrt(2.0 / 1e5);
  for (int t : {1, 250, 500, 1000}) {
    const double v = sample_variance(q_sample(z, t, eps, sched).to_vector());
    s.items.push_back({fmt("q_sample variance t=%d", t), std::abs(v - 1) <= band,
                       fmt("var %.5f band +-%.5f over 1e5 scalars", v, band)});
  }
  s.items.push_back({"resolution 256 -> beta_T 0.01", beta_end_for_resolution(256) == 0.01, ""});
  s.items.push_back({"resolution 512 -> beta_T 0.02", beta_end_for_resolution(512) == 0.02, ""});
  s.items.push_back({"resolution 1024 -> beta_T 0.02", beta_end_for_resolution(1024) == 0.02, ""});
  return s;
}

CheckSuite check_guidance() {
  CheckSuite s{"guidance", {}};
  Rng rng(9);
  const Tensor c = randn({3, 4, 4, 4}, rng), u = randn({3, 4, 4, 4}, rng);
  {
    // three points of an affine function of s are collinear
    const double s1 = -0.5, s2 = 0.3, s3 = 2.2;
    const auto a = cfg_combine(c, u, s1).to_vector(), b = cfg_combine(c, u, s2).to_vector(),
               d = cfg_combine(c, u, s3).to_vector();
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double lhs = (d[i] - a[i]) * (s2 - s1), rhs = (b[i] - a[i]) * (s3 - s1);
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
    s.items.push_back({"cfg_combine three-point affinity", worst <= 1e-5, fmt("max deviation %.2e (float32)", worst)});
    const bool exact = cfg_combine(c, u, 1.0).to_vector() == c.to_vector() &&
                       cfg_combine(c, u, 0.0).to_vector() == u.to_vector();
    s.items.push_back({"cfg_combine exact at s=0 and s=1", exact, ""});
  }
  const auto g = GuidanceSchedule::sampled();
  s.items.push_back({"sampled guidance at step 5 of 30", guidance_at(g, 5, 30) == 1.1, fmt("%.17g", guidance_at(g, 5, 30))});
  s.items.push_back({"sampled guidance at step 30 of 30", guidance_at(g, 30, 30) == 3.6, fmt("%.17g", guidance_at(g, 30, 30))});
  s.items.push_back({"sampled guidance outside the window", guidance_at(g, 4, 30) == 1.0, ""});

  auto model = build_diffusion_model(tiny_unet_spec(), 12);
  Rng head(3);
  for (auto& nt : model->named_parameters())
    if (nt.name.rfind("out.conv.", 0) == 0)
      for (auto& v : nt.value.mutable_data<float>()) v = static_cast<float>(head.normal(0.0, 0.1));
  model->set_training(false);
  const auto sched = make_schedule(50, ScheduleKind::kScaledLinear, 0.012);
  SampleRequest req;
  req.shape = {2, 2, 4, 4};
  req.context = synthetic_context({0, 1}, 2, 8, 0);
  req.steps = 8;
  req.seed = 42;
  const auto one = GuidanceSchedule::constant(1.0);
  SampleRequest guided = req;
  guided.guidance = &one;
  s.items.push_back({"s=1 ddpm trajectory equals unguided",
                     sample_ddpm(*model, sched, guided).to_vector() == sample_ddpm(*model, sched, req).to_vector(),
                     "bitwise"});
  s.items.push_back({"s=1 heun trajectory equals unguided",
                     sample_heun(*model, sched, guided).to_vector() == sample_heun(*model, sched, req).to_vector(),
                     "bitwise"});
  return s;
}

CheckSuite check_heun() {
  CheckSuite s{"heun", {}};
  const double a = -1.3, s0 = 0.0, s1 = 2.0;
  auto f = [a](const std::vector<double>& x, double) { return std::vector<double>{a * x[0]}; };
  const double exact = std::exp(a * (s1 - s0));
  double prev = 0;
  for (int n : {32, 64, 128, 256}) {
    const double err = std::abs(heun_integrate(f, {1.0}, s0, s1, n)[0] - exact);
    if (prev > 0) {
      const double ratio = prev / err;
      s.items.push_back({fmt("error ratio %d -> %d steps", n / 2, n), ratio >= 3.5 && ratio <= 4.5,
                         fmt("%.4f (err %.3e)", ratio, err)});
    }
    prev = err;
  }
  return s;
}

}  // namespace ascan
