#include <stdexcept>

#include "ascan/diffusion.hpp"

namespace ascan {

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double s) {
  if (eps_cond.shape() != eps_uncond.shape())
    throw ShapeError("cfg_combine: " + shape_str(eps_cond.shape()) + " vs " + shape_str(eps_uncond.shape()));
  // the endpoints are returned as-is so that s = 1 reproduces the conditional
  // trajectory bit for bit
  if (s == 1.0) return eps_cond;
  if (s == 0.0) return eps_uncond;
  return eps_uncond + scale(eps_cond - eps_uncond, s);
}

GuidanceSchedule GuidanceSchedule::constant(double s) {
  GuidanceSchedule g;
  g.mode = Mode::kConstant;
  g.scale = s;
  return g;
}

GuidanceSchedule GuidanceSchedule::sampled(int lo, int hi, double s_lo, double s_hi) {
  GuidanceSchedule g;
  g.mode = Mode::kSampled;
  g.lo = lo;
  g.hi = hi;
  g.s_lo = s_lo;
  g.s_hi = s_hi;
  return g;
}

double guidance_at(const GuidanceSchedule& g, int step, int /*total_steps*/) {
  if (g.mode == GuidanceSchedule::Mode::kConstant) return g.scale;
  if (step < g.lo || step > g.hi) return 1.0;
  if (g.hi == g.lo) return g.s_lo;
  return g.s_lo + (g.s_hi - g.s_lo) * (step - g.lo) / static_cast<double>(g.hi - g.lo);
}

std::vector<std::string> check_guidance(const GuidanceSchedule& g, int total_steps) {
  std::vector<std::string> out;
  if (g.mode == GuidanceSchedule::Mode::kSampled) {
    if (g.s_lo > g.s_hi) out.push_back("guidance scale range must be increasing");
    if (g.lo < 1 || g.lo > g.hi || g.hi > total_steps)
      out.push_back("guidance window [" + std::to_string(g.lo) + ", " + std::to_string(g.hi) +
                    "] must lie in [1, " + std::to_string(total_steps) + "]");
  }
  return out;
}

}  // namespace ascan
