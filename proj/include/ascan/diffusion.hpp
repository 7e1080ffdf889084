#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ascan/blocks.hpp"
#include "ascan/config.hpp"
#include "ascan/module.hpp"

namespace ascan {

// --- noise schedule ----------------------------------------------------------

enum class ScheduleKind { kLinear, kScaledLinear };

struct NoiseSchedule {
  int T = 0;
  ScheduleKind kind = ScheduleKind::kLinear;
  double beta_start = 0, beta_end = 0;
  std::vector<double> betas, alphas, alpha_bars;  // index t-1 holds step t

  /// alpha_bar at step t in [0, T]; step 0 is the clean signal (1.0).
  double alpha_bar(int t) const;
  /// sqrt((1 - alpha_bar) / alpha_bar), the noise level of the ODE view.
  double sigma(int t) const;
};

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_start, double beta_end);
/// Defaults for the start value: 1e-4 (linear), 8.5e-4 (scaled linear).
NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_end);
/// beta_T by training resolution: 0.01 up to 256 px, 0.02 from 512 px.
double beta_end_for_resolution(int resolution);
ScheduleKind parse_schedule_kind(const std::string& name);

/// z_t = sqrt(ab) z + sqrt(1 - ab) (eps + offset * eta), eta one normal
/// draw per (sample, channel) broadcast over the remaining axes. `t` holds
/// one step per sample. `rng` is required only when offset_noise != 0.
Tensor q_sample(const Tensor& z, const std::vector<int>& t, const Tensor& eps, const NoiseSchedule& s,
                double offset_noise = 0.0, Rng* rng = nullptr);
Tensor q_sample(const Tensor& z, int t, const Tensor& eps, const NoiseSchedule& s, double offset_noise = 0.0,
                Rng* rng = nullptr);

// --- guidance ----------------------------------------------------------------

/// eps_uncond + s (eps_cond - eps_uncond); exact at s = 0 and s = 1.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double s);

struct GuidanceSchedule {
  enum class Mode { kConstant, kSampled } mode = Mode::kConstant;
  double scale = 1.0;
  int lo = 5, hi = 30;  // 1-based sampling steps, inclusive
  double s_lo = 1.1, s_hi = 3.6;

  static GuidanceSchedule constant(double s);
  static GuidanceSchedule sampled(int lo = 5, int hi = 30, double s_lo = 1.1, double s_hi = 3.6);
};

/// Scale at 1-based sampling `step`; sampled mode gives 1.0 outside [lo, hi]
/// and interpolates linearly from s_lo to s_hi inside.
double guidance_at(const GuidanceSchedule& g, int step, int total_steps);
std::vector<std::string> check_guidance(const GuidanceSchedule& g, int total_steps);

// --- denoisers ---------------------------------------------------------------

/// Anything that predicts the noise in z_t. `context` is [N, Lc, Dc].
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor eps(const Tensor& z_t, const std::vector<double>& t, const Tensor& context, Rng* rng) const = 0;
  /// Learned unconditional token [1, 1, Dc]; undefined when the denoiser
  /// has no unconditional branch.
  virtual Tensor null_token() const { return {}; }
};

/// Per-stage outputs captured during a forward pass.
struct UnetTrace {
  std::vector<Tensor> down, up;
  Tensor mid;
};

/// Asymmetric UNet: Down stages record their outputs, the Middle runs at the
/// deepest resolution, Up stages take the mirrored skip (concatenated and
/// fused by a 1x1 conv, or added), then BN -> GeLU -> zero-initialized 3x3.
class DiffusionModel : public Module, public Denoiser {
 public:
  DiffusionModel(const ArchSpec& spec, const InitContext& init);

  /// z_t [N, C, H, W] with H, W divisible by the total downsampling factor;
  /// context are the raw frozen tokens, adapted internally.
  Tensor forward(const Tensor& z_t, const std::vector<double>& t, const Tensor& context, Rng* rng = nullptr,
                 UnetTrace* trace = nullptr,
                 const std::function<Tensor(std::size_t, const Tensor&)>& skip_edit = nullptr) const;
  Tensor eps(const Tensor& z_t, const std::vector<double>& t, const Tensor& context, Rng* rng) const override {
    return forward(z_t, t, context, rng);
  }
  Tensor null_token() const override { return null_context_; }
  Tensor adapt_context(const Tensor& context, Rng* rng = nullptr) const;
  const ArchSpec& spec() const { return spec_; }
  int downsampling() const;

 private:
  struct Stage {
    std::vector<std::shared_ptr<Block>> blocks;
    std::shared_ptr<Conv2d> fuse, upsample;  // up stages only
    int upsample_factor = 1;
  };
  Tensor run_stage(const Stage& s, Tensor h, const Condition& c, Rng* rng) const;

  ArchSpec spec_;
  std::shared_ptr<TimeEmbedding> time_embed_;
  Tensor null_context_;
  std::vector<std::shared_ptr<Block>> adapter_;
  std::shared_ptr<Conv2d> in_conv_;
  std::vector<Stage> down_, up_;
  Stage mid_;
  std::shared_ptr<BatchNorm2d> out_norm_;
  std::shared_ptr<Conv2d> out_conv_;
};

std::shared_ptr<DiffusionModel> build_diffusion_model(const ArchSpec& spec, std::uint64_t seed,
                                                      DType dtype = DType::kFloat32);
std::shared_ptr<DiffusionModel> build_meta_diffusion_model(const ArchSpec& spec);

/// Frozen stand-in for text/class encoders: [N, tokens, dim] tokens drawn
/// from N(0, 1) by a generator seeded from (seed, id).
Tensor synthetic_context(const std::vector<int>& ids, int tokens, int dim, std::uint64_t seed,
                         DType dtype = DType::kFloat32);

// --- objective ---------------------------------------------------------------

struct LossOptions {
  double p_uncond = 0.1;  // probability of swapping a sample's context for the null token
  double offset_noise = 0.0;
};

/// Draws t ~ U{1..T} and eps ~ N(0, I) per sample and returns the mean squared
/// error between eps and the prediction at z_t.
Tensor diffusion_loss(const Denoiser& model, const Tensor& z, const Tensor& context, const NoiseSchedule& s,
                      Rng& rng, const LossOptions& opts = {});

// --- samplers ----------------------------------------------------------------

/// `steps` evenly spaced timesteps from T down to 1 (all of them when
/// steps == T).
std::vector<int> sampling_timesteps(int T, int steps);

struct SampleRequest {
  Shape shape;      // [N, C, H, W]
  Tensor context;   // [N, Lc, Dc]
  int steps = 30;
  std::uint64_t seed = 0;
  const GuidanceSchedule* guidance = nullptr;  // null: conditional branch only
  /// Start from this noise instead of drawing it (tests).
  std::optional<Tensor> initial_noise;
};

/// Ancestral sampling with the posterior mean over the (respaced) steps.
Tensor sample_ddpm(const Denoiser& model, const NoiseSchedule& s, const SampleRequest& req);
/// Second-order deterministic integration of the probability-flow ODE in
/// x = z / sqrt(ab) over sigma; the final step to sigma = 0 is Euler.
Tensor sample_heun(const Denoiser& model, const NoiseSchedule& s, const SampleRequest& req);

/// Heun's method for dx/ds = f(x, s) from s0 to s1 in n equal steps.
std::vector<double> heun_integrate(const std::function<std::vector<double>(const std::vector<double>&, double)>& f,
                                   std::vector<double> x, double s0, double s1, int n);

// --- curriculum --------------------------------------------------------------

struct StageRecipe {
  std::string name;
  int resolution = 256;
  std::int64_t iterations = 0;
  int batch_size = 0;
  double lr = 0;
  double beta_end = 0;
  double offset_noise = 0;
  double beta1 = 0.9, beta2 = 0.99;
};

StageRecipe curriculum_config(const std::string& stage);  // s256 | s512 | s1024 | multi_aspect
/// Desk-scale copy: resolution / divisor, iterations / 1000, batch / 512
/// (at least 1 each); lr, beta_end and offset noise unchanged.
StageRecipe toy_stage(const StageRecipe& r, int divisor);

// --- output ------------------------------------------------------------------

/// Raw little-endian float32 payload plus "<path>.json" with the shape.
void save_raw_tensor(const std::string& path, const Tensor& t);
/// 8-bit Netpbm image (PGM / PPM / PAM for 1 / 3 / 4 channels) of sample `n`
/// of a [N, C, H, W] tensor; values map linearly from [lo, hi] to [0, 255],
/// clamped.
void write_image(const std::string& path, const Tensor& t, std::int64_t n = 0, double lo = -1.0, double hi = 1.0);

// --- training ----------------------------------------------------------------

struct DiffusionRecipe {
  double lr = 1e-3;
  double warmup_steps = 100;  // linear from 0
  bool cosine_decay = false;  // after warmup: cosine to 0 at the last iteration, else constant
  std::int64_t iterations = 1000;
  int batch_size = 64;
  double weight_decay = 0.0;
  double beta1 = 0.9, beta2 = 0.99;
  double grad_clip_norm = 1.0;
  // 0 keeps no average. Batch-norm statistics are those of the raw weights,
  // so an average of fast-moving weights can be worse than the raw ones.
  double ema_decay = 0.999;
  LossOptions loss;
};

/// Latents with condition ids.
struct LatentBatch {
  Tensor z;
  std::vector<int> ids;
};
using BatchSource = std::function<LatentBatch(Rng&, int batch_size)>;

struct DiffusionTrainResult {
  std::vector<double> losses;  // per iteration
  std::vector<NamedTensor> ema_state;
};

struct DiffusionTrainOptions {
  std::ostream* metrics = nullptr;  // JSON lines per step
  std::uint64_t context_seed = 0;
};

DiffusionTrainResult train_diffusion(DiffusionModel& model, const BatchSource& data, const NoiseSchedule& s,
                                     const DiffusionRecipe& r, std::uint64_t seed,
                                     const DiffusionTrainOptions& opts = {});

using ContextSource = std::function<Tensor(const std::vector<int>& ids)>;
/// Context tokens for `spec` from synthetic_context with `seed`.
ContextSource synthetic_context_source(const ArchSpec& spec, std::uint64_t seed, DType dtype = DType::kFloat32);

/// Mean loss over `batches` seeded draws; identical draws for any model.
double evaluate_diffusion_loss(const Denoiser& model, const BatchSource& data, const ContextSource& context,
                               const NoiseSchedule& s, int batches, int batch_size, std::uint64_t seed,
                               const LossOptions& opts);

// --- 2D toy ------------------------------------------------------------------

/// Mixture of isotropic 2D Gaussians presented as [N, 2, 1, 1] latents.
struct GaussianMixture2D {
  std::vector<std::array<double, 2>> means;
  double stddev = 0.35;
  static GaussianMixture2D standard();
  LatentBatch sample(Rng& rng, int n) const;
  /// E[x x^T] as {xx, xy, yy}.
  std::array<double, 3> second_moments() const;
};

/// Small unet for 1x1 latents (every stride 1).
ArchSpec toy_2d_spec();
/// Settings of the 2D toy run: cosine-decayed AdamW, raw weights (no EMA).
DiffusionRecipe toy_2d_recipe();

struct Toy2DReport {
  double baseline_loss = 0;  // zero predictor on the evaluation draws
  double trained_loss = 0;   // trained model, eval mode, same draws
  std::array<double, 3> sample_moments{}, data_moments{};
  double seconds = 0;
};
/// Trains toy_2d_spec on the standard mixture and draws `samples` DDPM
/// samples (`steps` respaced steps), conditioned on ids cycling over the
/// components.
Toy2DReport run_toy_2d(std::uint64_t seed, const DiffusionRecipe& recipe, int samples = 1000, int steps = 50);

/// {mean x^2, mean xy, mean y^2} over [N, 2, ...] points.
std::array<double, 3> empirical_second_moments(const Tensor& points);

}  // namespace ascan
