#include <stdexcept>

#include "ascan/diffusion.hpp"

namespace ascan {

namespace {

int total_blocks(const ArchSpec& spec) {
  std::size_t n = spec.unet.middle.blocks.size();
  for (const auto& s : spec.stages) n += s.blocks.size();
  for (const auto& s : spec.up_stages) n += s.blocks.size();
  return static_cast<int>(n);
}

}  // namespace

DiffusionModel::DiffusionModel(const ArchSpec& spec, const InitContext& init) : spec_(spec) {
  if (spec.kind != ArchKind::kUnet) throw std::invalid_argument("diffusion model needs a unet spec");
  for (const auto& d : validate(spec))
    if (d.severity == Severity::kError) throw std::invalid_argument("invalid spec: " + d.message);
  const auto& u = spec.unet;
  const int te = resolved_time_dim(spec), dc = u.context_dim;

  time_embed_ = add_child("time_embed", std::make_shared<TimeEmbedding>(init, te));
  null_context_ = add_parameter("null_context", init.normal({1, 1, dc}, 1.0));
  auto adapter = add_child("context_adapter", std::make_shared<ModuleGroup>());
  for (int b = 0; b < 2; ++b) {
    BlockOptions o;
    o.in_channels = o.out_channels = dc;
    o.heads = u.context_heads;
    adapter_.push_back(adapter->add("block" + std::to_string(b), make_block(BlockKind::kT, init, o)));
  }

  int ch = spec.stem.out_channels;
  in_conv_ = add_child("in_conv", std::make_shared<Conv2d>(init, spec.input_channels, ch, 3, 1, true));

  const auto rates = drop_rate_ramp(spec.stochastic_depth, total_blocks(spec));
  std::size_t k = 0;
  auto build_stage = [&](const StageSpec& st, ModuleGroup& group, bool strided, Stage& out) {
    for (std::size_t j = 0; j < st.blocks.size(); ++j, ++k) {
      BlockOptions o;
      o.in_channels = ch;
      o.out_channels = st.out_channels;
      o.stride = strided && j == 0 ? st.entry_stride : 1;
      o.drop_rate = rates[k];
      if (is_conv(st.blocks[j])) {
        o.time_dim = te;
      } else {
        o.heads = resolved_heads(spec, st);
        o.rope = true;
        o.qk_norm = true;
        o.context_dim = dc;
      }
      out.blocks.push_back(group.add("block" + std::to_string(j), make_block(st.blocks[j], init, o)));
      ch = st.out_channels;
    }
  };

  std::vector<int> skip_ch;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    auto g = add_child("down" + std::to_string(i), std::make_shared<ModuleGroup>());
    down_.emplace_back();
    build_stage(spec.stages[i], *g, true, down_.back());
    skip_ch.push_back(ch);
  }
  build_stage(u.middle, *add_child("mid", std::make_shared<ModuleGroup>()), false, mid_);

  const std::size_t n = spec.up_stages.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto g = add_child("up" + std::to_string(i), std::make_shared<ModuleGroup>());
    up_.emplace_back();
    Stage& st = up_.back();
    const std::size_t mirror = n - 1 - i;
    if (u.skip == SkipMode::kConcat) {
      st.fuse = g->add("fuse", std::make_shared<Conv2d>(init, ch + skip_ch[mirror], ch, 1, 1, true));
    } else if (ch != skip_ch[mirror]) {
      throw std::invalid_argument("additive skip into up" + std::to_string(i) + " needs " + std::to_string(ch) +
                                  " channels from down" + std::to_string(mirror) + ", which has " +
                                  std::to_string(skip_ch[mirror]));
    }
    build_stage(spec.up_stages[i], *g, false, st);
    if (i + 1 < n) {
      const int next = spec.up_stages[i + 1].out_channels;
      st.upsample = g->add("upsample", std::make_shared<Conv2d>(init, ch, next, 3, 1, true));
      st.upsample_factor = spec.stages[mirror].entry_stride;
      ch = next;
    }
  }

  auto out = add_child("out", std::make_shared<ModuleGroup>());
  out_norm_ = out->add("norm", std::make_shared<BatchNorm2d>(init, ch));
  out_conv_ = out->add("conv", std::make_shared<Conv2d>(init, ch, spec.input_channels, 3, 1, true));
  if (!init.meta) out_conv_->zero_();
}

int DiffusionModel::downsampling() const {
  int f = 1;
  for (const auto& s : spec_.stages) f *= s.entry_stride;
  return f;
}

Tensor DiffusionModel::adapt_context(const Tensor& context, Rng* rng) const {
  if (!context.defined() || context.dim() != 3 || context.size(2) != spec_.unet.context_dim)
    throw ShapeError("context must be [N, L, " + std::to_string(spec_.unet.context_dim) + "], got " +
                     (context.defined() ? shape_str(context.shape()) : std::string("nothing")));
  Tensor c = context;
  for (const auto& b : adapter_) c = b->forward(c, nullptr, rng);
  return c;
}

Tensor DiffusionModel::run_stage(const Stage& s, Tensor h, const Condition& c, Rng* rng) const {
  for (const auto& b : s.blocks) h = b->forward(h, &c, rng);
  return h;
}

Tensor DiffusionModel::forward(const Tensor& z_t, const std::vector<double>& t, const Tensor& context, Rng* rng,
                               UnetTrace* trace,
                               const std::function<Tensor(std::size_t, const Tensor&)>& skip_edit) const {
  if (z_t.dim() != 4 || z_t.size(1) != spec_.input_channels)
    throw ShapeError("unet expects [N, " + std::to_string(spec_.input_channels) + ", H, W], got " +
                     shape_str(z_t.shape()));
  const int f = downsampling();
  if (z_t.size(2) % f || z_t.size(3) % f)
    throw std::invalid_argument("latent " + std::to_string(z_t.size(2)) + "x" + std::to_string(z_t.size(3)) +
                                " is not divisible by the downsampling factor " + std::to_string(f));
  if (static_cast<std::int64_t>(t.size()) != z_t.size(0))
    throw std::invalid_argument("one timestep per sample required");
  if (context.defined() && context.dim() == 3 && context.size(0) != z_t.size(0))
    throw ShapeError("context batch " + std::to_string(context.size(0)) + " does not match latent batch " +
                     std::to_string(z_t.size(0)));

  Condition c{time_embed_->forward(t, z_t.dtype()), adapt_context(context, rng)};
  Tensor h = in_conv_->forward(z_t);
  std::vector<Tensor> skips;
  for (const auto& s : down_) {
    h = run_stage(s, h, c, rng);
    skips.push_back(h);
  }
  h = run_stage(mid_, h, c, rng);
  if (trace) {
    trace->down = skips;
    trace->mid = h;
    trace->up.clear();
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    const Stage& s = up_[i];
    const std::size_t mirror = up_.size() - 1 - i;
    Tensor skip = skip_edit ? skip_edit(mirror, skips[mirror]) : skips[mirror];
    h = s.fuse ? s.fuse->forward(concat({h, skip}, 1)) : h + skip;
    h = run_stage(s, h, c, rng);
    if (trace) trace->up.push_back(h);
    if (s.upsample) {
      if (s.upsample_factor > 1) h = upsample_nearest2d(h, s.upsample_factor);
      h = s.upsample->forward(h);
    }
  }
  return out_conv_->forward(gelu(out_norm_->forward(h)));
}

std::shared_ptr<DiffusionModel> build_diffusion_model(const ArchSpec& spec, std::uint64_t seed, DType dtype) {
  Rng rng(seed);
  return std::make_shared<DiffusionModel>(spec, InitContext{&rng, dtype, false});
}

std::shared_ptr<DiffusionModel> build_meta_diffusion_model(const ArchSpec& spec) {
  return std::make_shared<DiffusionModel>(spec, InitContext{nullptr, DType::kFloat32, true});
}

Tensor synthetic_context(const std::vector<int>& ids, int tokens, int dim, std::uint64_t seed, DType dtype) {
  if (ids.empty() || tokens <= 0 || dim <= 0) throw std::invalid_argument("synthetic context needs ids, tokens, dim");
  std::vector<double> v;
  v.reserve(ids.size() * tokens * dim);
  for (int id : ids) {
    Rng r(seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(id) + 1)));
    for (int i = 0; i < tokens * dim; ++i) v.push_back(r.normal());
  }
  return Tensor::from_vector({static_cast<std::int64_t>(ids.size()), tokens, dim}, v, dtype);
}

}  // namespace ascan
