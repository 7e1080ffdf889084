#include <algorithm>
#include <stdexcept>

#include "ascan/diffusion.hpp"

namespace ascan {

StageRecipe curriculum_config(const std::string& stage) {
  StageRecipe r;
  r.name = stage;
  if (stage == "s256") {
    r.resolution = 256;
    r.iterations = 300'000;
    r.batch_size = 16384;
    r.lr = 4e-4;
  } else if (stage == "s512") {
    r.resolution = 512;
    r.iterations = 200'000;
    r.batch_size = 6144;
    r.lr = 1e-4;
  } else if (stage == "s1024" || stage == "multi_aspect") {
    r.resolution = 1024;
    r.iterations = 100'000;
    r.batch_size = 1536;
    r.lr = 5e-5;
    if (stage == "multi_aspect") r.offset_noise = 0.05;
  } else {
    throw std::invalid_argument("unknown curriculum stage '" + stage + "' (s256 | s512 | s1024 | multi_aspect)");
  }
  r.beta_end = beta_end_for_resolution(r.resolution);
  return r;
}

StageRecipe toy_stage(const StageRecipe& r, int divisor) {
  if (divisor < 1) throw std::invalid_argument("toy divisor must be positive");
  StageRecipe t = r;
  t.resolution = std::max(1, r.resolution / divisor);
  t.iterations = std::max<std::int64_t>(1, r.iterations / 1000);
  t.batch_size = std::max(1, r.batch_size / 512);
  return t;
}

}  // namespace ascan
