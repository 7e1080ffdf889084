#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ascan/diffusion.hpp"
#include "ascan/optim.hpp"
#include "json.hpp"

namespace ascan {

namespace {

DType model_dtype(const Module& m) {
  const auto p = m.named_parameters();
  return p.empty() ? DType::kFloat32 : p.front().value.dtype();
}

// Restores the training flag on scope exit.
class ModeGuard {
 public:
  ModeGuard(Module& m, bool training) : m_(m), previous_(m.training()) { m.set_training(training); }
  ~ModeGuard() { m_.set_training(previous_); }
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  Module& m_;
  bool previous_;
};

}  // namespace

DiffusionTrainResult train_diffusion(DiffusionModel& model, const BatchSource& data, const NoiseSchedule& s,
                                     const DiffusionRecipe& r, std::uint64_t seed,
                                     const DiffusionTrainOptions& opts) {
  if (r.iterations < 0 || r.batch_size < 1 || !(r.lr >= 0) || r.grad_clip_norm <= 0 || r.ema_decay < 0 ||
      r.ema_decay >= 1)
    throw std::invalid_argument("diffusion recipe out of range");
  const DType dtype = model_dtype(model);
  const ContextSource context = synthetic_context_source(model.spec(), opts.context_seed, dtype);
  ModeGuard mode(model, true);
  AdamW opt(model.named_parameters(), r.beta1, r.beta2, r.weight_decay);
  const auto params = model.parameters();
  std::optional<Ema> ema;
  if (r.ema_decay > 0) ema.emplace(model, r.ema_decay);

  Rng rng(seed);
  DiffusionTrainResult result;
  for (std::int64_t it = 0; it < r.iterations; ++it) {
    LatentBatch batch = data(rng, r.batch_size);
    const Tensor z = batch.z.dtype() == dtype ? batch.z : batch.z.to(dtype);
    const Tensor ctx = context(batch.ids);
    opt.zero_grad();
    Tensor loss = diffusion_loss(model, z, ctx, s, rng, r.loss);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw std::runtime_error("diffusion loss became " + std::to_string(value) + " at iteration " +
                               std::to_string(it));
    loss.backward();
    const double gn = clip_grad_norm(params, r.grad_clip_norm);
    double lr = r.warmup_steps > 0 ? r.lr * std::min(1.0, (it + 1) / r.warmup_steps) : r.lr;
    if (r.cosine_decay && it >= r.warmup_steps) {
      const double span = std::max(1.0, r.iterations - 1 - r.warmup_steps);
      lr = 0.5 * r.lr * (1.0 + std::cos(M_PI * std::min(1.0, (it - r.warmup_steps) / span)));
    }
    opt.step(lr);
    if (ema) ema->update(model);
    result.losses.push_back(value);
    if (opts.metrics)
      *opts.metrics << nlohmann::json{{"step", it}, {"lr", lr}, {"loss", value}, {"grad_norm", gn}}.dump() << "\n";
  }
  if (ema) result.ema_state = ema->shadow();
  return result;
}

ContextSource synthetic_context_source(const ArchSpec& spec, std::uint64_t seed, DType dtype) {
  const int tokens = spec.unet.context_tokens, dim = spec.unet.context_dim;
  return [=](const std::vector<int>& ids) { return synthetic_context(ids, tokens, dim, seed, dtype); };
}

double evaluate_diffusion_loss(const Denoiser& model, const BatchSource& data, const ContextSource& context,
                               const NoiseSchedule& s, int batches, int batch_size, std::uint64_t seed,
                               const LossOptions& opts) {
  if (batches < 1) throw std::invalid_argument("need at least one evaluation batch");
  NoGradGuard no_grad;
  Rng rng(seed);
  double total = 0;
  for (int b = 0; b < batches; ++b) {
    LatentBatch batch = data(rng, batch_size);
    const Tensor ctx = context(batch.ids);
    total += diffusion_loss(model, batch.z.to(ctx.dtype()), ctx, s, rng, opts).item();
  }
  return total / batches;
}

GaussianMixture2D GaussianMixture2D::standard() {
  GaussianMixture2D g;
  // four components on a circle of radius 1.5 around (0.5, -0.25)
  g.means = {{2.0, -0.25}, {0.5, 1.25}, {-1.0, -0.25}, {0.5, -1.75}};
  g.stddev = 0.35;
  return g;
}

LatentBatch GaussianMixture2D::sample(Rng& rng, int n) const {
  LatentBatch b;
  std::vector<double> v;
  v.reserve(2 * n);
  for (int i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(means.size()) - 1));
    b.ids.push_back(k);
    v.push_back(means[k][0] + stddev * rng.normal());
    v.push_back(means[k][1] + stddev * rng.normal());
  }
  b.z = Tensor::from_vector({n, 2, 1, 1}, v);
  return b;
}

std::array<double, 3> GaussianMixture2D::second_moments() const {
  std::array<double, 3> m{0, 0, 0};
  for (const auto& mu : means) {
    m[0] += mu[0] * mu[0] + stddev * stddev;
    m[1] += mu[0] * mu[1];
    m[2] += mu[1] * mu[1] + stddev * stddev;
  }
  for (auto& x : m) x /= static_cast<double>(means.size());
  return m;
}

std::array<double, 3> empirical_second_moments(const Tensor& points) {
  if (points.dim() < 2 || points.size(1) != 2 || points.numel() != 2 * points.size(0))
    throw ShapeError("expected [N, 2, ...] points with one spatial site, got " + shape_str(points.shape()));
  const auto v = points.to_vector();
  const std::int64_t n = points.size(0);
  std::array<double, 3> m{0, 0, 0};
  for (std::int64_t i = 0; i < n; ++i) {
    m[0] += v[2 * i] * v[2 * i];
    m[1] += v[2 * i] * v[2 * i + 1];
    m[2] += v[2 * i + 1] * v[2 * i + 1];
  }
  for (auto& x : m) x /= static_cast<double>(n);
  return m;
}

ArchSpec toy_2d_spec() {
  ArchSpec spec;
  spec.name = "toy-2d";
  spec.kind = ArchKind::kUnet;
  spec.input_channels = 2;
  spec.stem.out_channels = 32;
  spec.stem.entry_stride = 1;
  StageSpec down;
  down.blocks = {BlockKind::kCcond, BlockKind::kTcond};
  down.out_channels = 32;
  down.entry_stride = 1;
  down.num_heads = 1;
  spec.stages = {down};
  spec.up_stages = mirror_stages(spec.stages);
  spec.unet.middle.blocks = {BlockKind::kCcond};
  spec.unet.middle.out_channels = 32;
  spec.unet.middle.num_heads = 1;
  spec.unet.time_embed_dim = 64;
  spec.unet.context_dim = 16;
  spec.unet.context_tokens = 1;
  spec.unet.context_heads = 1;
  spec.stochastic_depth = 0.0;
  return spec;
}

DiffusionRecipe toy_2d_recipe() {
  DiffusionRecipe r;
  r.lr = 3e-3;
  r.warmup_steps = 50;
  r.cosine_decay = true;
  r.iterations = 600;
  r.batch_size = 128;
  r.ema_decay = 0.0;
  return r;
}

Toy2DReport run_toy_2d(std::uint64_t seed, const DiffusionRecipe& recipe, int samples, int steps) {
  const auto start = std::chrono::steady_clock::now();
  const auto mix = GaussianMixture2D::standard();
  const auto spec = toy_2d_spec();
  const auto schedule = make_schedule(1000, ScheduleKind::kLinear, 0.02);
  const BatchSource data = [&](Rng& r, int n) { return mix.sample(r, n); };
  const ContextSource context = synthetic_context_source(spec, seed);

  struct Zero : Denoiser {
    Tensor eps(const Tensor& z, const std::vector<double>&, const Tensor&, Rng*) const override {
      return Tensor::zeros(z.shape(), z.dtype());
    }
  } zero;
  LossOptions eval_opts;
  eval_opts.p_uncond = 0.0;
  Rng seeds(seed);
  const std::uint64_t eval_seed = seeds.next_seed(), init_seed = seeds.next_seed(), train_seed = seeds.next_seed(),
                      sample_seed = seeds.next_seed();

  Toy2DReport rep;
  rep.baseline_loss = evaluate_diffusion_loss(zero, data, context, schedule, 8, 256, eval_seed, eval_opts);
  auto model = build_diffusion_model(spec, init_seed);
  DiffusionTrainOptions opts;
  opts.context_seed = seed;
  auto result = train_diffusion(*model, data, schedule, recipe, train_seed, opts);
  if (!result.ema_state.empty()) model->load_state(result.ema_state);
  model->set_training(false);
  rep.trained_loss = evaluate_diffusion_loss(*model, data, context, schedule, 8, 256, eval_seed, eval_opts);

  std::vector<int> ids;
  for (int i = 0; i < samples; ++i) ids.push_back(i % static_cast<int>(mix.means.size()));
  SampleRequest req;
  req.shape = {samples, 2, 1, 1};
  req.context = context(ids);
  req.steps = steps;
  req.seed = sample_seed;
  rep.sample_moments = empirical_second_moments(sample_ddpm(*model, schedule, req));
  rep.data_moments = mix.second_moments();
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace ascan
