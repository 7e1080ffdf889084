#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ascan/analysis.hpp"

namespace ascan {

namespace {

using i64 = std::int64_t;

// Accumulates entries. Spatial sizes are tracked so MACs can be computed
// alongside; with `macs` off the sizes are still propagated but unused.
class Counter {
 public:
  explicit Counter(CostReport& r) : r_(r) {}

  void add(const std::string& path, const char* kind, i64 params, i64 macs) {
    r_.entries.push_back({path, kind, params, macs});
  }
  void conv(const std::string& path, int in, int out, int k, bool bias, int oh, int ow) {
    add(path, "conv", i64(k) * k * in * out + (bias ? out : 0), conv_macs(oh, ow, in, out, k));
  }
  void linear(const std::string& path, int in, int out, i64 tokens, bool bias = true) {
    add(path, "linear", linear_params(in, out, bias), tokens * in * out);
  }
  void norm(const std::string& path, int c) { add(path, "norm", 2 * i64(c), 0); }

 private:
  CostReport& r_;
};

struct Grid {
  int h, w;
  i64 tokens() const { return i64(h) * w; }
  Grid down(int s) const { return {h / s, w / s}; }
};

void c_block(Counter& c, const std::string& p, int in, int out, int stride, int time_dim, Grid g) {
  const int mid = 4 * out;
  const Grid o = g.down(stride);
  c.conv(p + ".expand.conv", in, mid, 3, false, o.h, o.w);
  c.norm(p + ".expand.norm", mid);
  if (time_dim > 0) c.linear(p + ".time_proj", time_dim, mid, 1);
  const int hidden = std::max(1, static_cast<int>(std::lround(0.25 * out)));
  c.linear(p + ".se.reduce", mid, hidden, 1);
  c.linear(p + ".se.expand", hidden, mid, 1);
  c.conv(p + ".project.conv", mid, out, 1, false, o.h, o.w);
  c.norm(p + ".project.norm", out);
  if (stride != 1 || in != out) {
    c.conv(p + ".shortcut.conv", in, out, 1, false, o.h, o.w);
    c.norm(p + ".shortcut.norm", out);
  }
}

struct TOptions {
  int heads = 1;
  int rel_grid = 0;
  bool qk_norm = false;
  bool transition_only = false;
  int context_dim = 0;
  int context_len = 0;
};

void t_block(Counter& c, const std::string& p, int in, int d, int stride, const TOptions& o, Grid g,
             i64 seq_len = 0) {
  const Grid og = g.down(stride);
  if (stride != 1 || in != d) {
    c.conv(p + ".transition.conv", in, d, 1, false, og.h, og.w);
    c.norm(p + ".transition.norm", d);
    if (o.transition_only) return;
  }
  const i64 l = seq_len ? seq_len : og.tokens();
  const int dh = d / o.heads;
  c.norm(p + ".norm", d);
  c.linear(p + ".qkv", d, 3 * d, l);
  c.add(p + ".attention", "attention", 0, 2 * l * l * d);
  c.linear(p + ".attn_out", d, d, l);
  c.linear(p + ".mlp_in", d, 4 * d, l);
  c.linear(p + ".mlp_out", 4 * d, d, l);
  if (o.rel_grid > 0) {
    const i64 side = 2 * i64(o.rel_grid) - 1;
    c.add(p + ".pos", "table", o.heads * side * side, 0);
  }
  if (o.qk_norm) c.add(p + ".qk_norm", "gain", 2 * i64(dh), 0);
  if (o.context_dim > 0) {
    const i64 lc = o.context_len;
    c.linear(p + ".cross.q", d, d, l);
    c.linear(p + ".cross.k", o.context_dim, d, lc);
    c.linear(p + ".cross.v", o.context_dim, d, lc);
    c.add(p + ".cross.attention", "attention", 0, 2 * l * lc * d);
    c.linear(p + ".cross.out", d, d, l);
    if (o.qk_norm) c.add(p + ".cross", "gain", 2 * i64(dh), 0);
  }
}

void classifier(Counter& c, const ArchSpec& s, Grid g) {
  const int stem = s.stem.out_channels;
  g = g.down(s.stem.entry_stride);
  c.conv("stem.conv1", s.input_channels, stem, 3, false, g.h, g.w);
  c.norm("stem.norm1", stem);
  c.conv("stem.conv2", stem, stem, 3, false, g.h, g.w);
  c.norm("stem.norm2", stem);
  int ch = stem;
  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    const auto& st = s.stages[i];
    TOptions t;
    t.heads = resolved_heads(s, st);
    t.rel_grid = relative_grid(s, i);
    for (std::size_t j = 0; j < st.blocks.size(); ++j) {
      const int stride = j == 0 ? st.entry_stride : 1;
      const std::string p = "stage" + std::to_string(i) + ".block" + std::to_string(j);
      if (is_conv(st.blocks[j])) {
        c_block(c, p, ch, st.out_channels, stride, 0, g);
      } else {
        t.transition_only = s.entry_t == EntryT::kTransition;
        t_block(c, p, ch, st.out_channels, stride, t, g);
      }
      g = g.down(stride);
      ch = st.out_channels;
    }
  }
  c.conv("head.conv", ch, s.classifier.embed_dim, 1, false, g.h, g.w);
  c.norm("head.norm", s.classifier.embed_dim);
  c.linear("head.fc", s.classifier.embed_dim, s.classifier.num_classes, 1);
}

int sinusoid_dim(int time_dim) { return std::max(2, (time_dim / 4) / 2 * 2); }

void unet_stage(Counter& c, const ArchSpec& s, const StageSpec& st, const std::string& prefix, int& ch, Grid& g,
                bool use_stride) {
  const auto& u = s.unet;
  TOptions t;
  t.heads = resolved_heads(s, st);
  t.qk_norm = true;
  t.context_dim = u.context_dim;
  t.context_len = u.context_tokens;
  for (std::size_t j = 0; j < st.blocks.size(); ++j) {
    const int stride = use_stride && j == 0 ? st.entry_stride : 1;
    const std::string p = prefix + ".block" + std::to_string(j);
    if (is_conv(st.blocks[j]))
      c_block(c, p, ch, st.out_channels, stride, resolved_time_dim(s), g);
    else
      t_block(c, p, ch, st.out_channels, stride, t, g);
    g = g.down(stride);
    ch = st.out_channels;
  }
}

void unet(Counter& c, const ArchSpec& s, Grid g) {
  const auto& u = s.unet;
  const int te = resolved_time_dim(s), sd = sinusoid_dim(te);
  c.linear("time_embed.fc1", sd, te, 1);
  c.linear("time_embed.fc2", te, te, 1);
  c.add("null_context", "token", i64(u.context_dim), 0);
  TOptions adapter;
  adapter.heads = u.context_heads;
  for (int b = 0; b < 2; ++b)
    t_block(c, "context_adapter.block" + std::to_string(b), u.context_dim, u.context_dim, 1, adapter, g,
            u.context_tokens);

  int ch = s.stem.out_channels;
  c.conv("in_conv", s.input_channels, ch, 3, true, g.h, g.w);
  std::vector<Grid> skip_grid;
  std::vector<int> skip_ch;
  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    unet_stage(c, s, s.stages[i], "down" + std::to_string(i), ch, g, true);
    skip_grid.push_back(g);
    skip_ch.push_back(ch);
  }
  unet_stage(c, s, u.middle, "mid", ch, g, false);
  const std::size_t n = s.up_stages.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string p = "up" + std::to_string(i);
    const std::size_t mirror = n - 1 - i;
    if (u.skip == SkipMode::kConcat) c.conv(p + ".fuse", ch + skip_ch[mirror], ch, 1, true, g.h, g.w);
    unet_stage(c, s, s.up_stages[i], p, ch, g, false);
    if (i + 1 < n) {
      g = skip_grid[mirror - 1];
      c.conv(p + ".upsample", ch, s.up_stages[i + 1].out_channels, 3, true, g.h, g.w);
      ch = s.up_stages[i + 1].out_channels;
    }
  }
  c.norm("out.norm", ch);
  c.conv("out.conv", ch, s.input_channels, 3, true, g.h, g.w);
}

CostReport run(const ArchSpec& spec, int h, int w) {
  CostReport r;
  r.name = spec.name;
  Counter c(r);
  if (spec.kind == ArchKind::kClassifier)
    classifier(c, spec, {h, w});
  else
    unet(c, spec, {h, w});
  for (const auto& e : r.entries) {
    r.total_params += e.params;
    r.total_macs += e.macs;
  }
  r.conventions = {
      {"mac", "one multiply-accumulate; bias adds excluded"},
      {"zero_mac", "normalization, activations, softmax, pooling, upsampling, gating, position terms"},
      {"attention", "2*L*L*d per self-attention block (logits and weighted sum), 2*L*Lc*d for cross-attention"},
      {"scope", "stem and head included; per sample"},
  };
  return r;
}

}  // namespace

std::int64_t conv_macs(int out_h, int out_w, int in, int out, int kernel) {
  return i64(out_h) * out_w * out * in * kernel * kernel;
}

std::int64_t linear_params(int in, int out, bool bias) { return i64(in) * out + (bias ? out : 0); }

int total_downsampling(const ArchSpec& spec) {
  int f = spec.stem.entry_stride;
  for (const auto& s : spec.stages) f *= s.entry_stride;
  return f;
}

std::int64_t CostReport::params_under(const std::string& prefix) const {
  i64 n = 0;
  for (const auto& e : entries)
    if (e.path == prefix || e.path.rfind(prefix + ".", 0) == 0) n += e.params;
  return n;
}

std::int64_t CostReport::macs_of_kind(const std::string& kind) const {
  i64 n = 0;
  for (const auto& e : entries)
    if (e.kind == kind) n += e.macs;
  return n;
}

CostReport count_params(const ArchSpec& spec) {
  const int f = total_downsampling(spec);
  CostReport r = run(spec, f, f);
  for (auto& e : r.entries) e.macs = 0;
  r.total_macs = 0;
  return r;
}

CostReport count_macs(const ArchSpec& spec, int height, int width) {
  const int f = total_downsampling(spec);
  if (height <= 0 || width <= 0 || height % f || width % f)
    throw std::invalid_argument("resolution " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by the downsampling factor " + std::to_string(f));
  CostReport r = run(spec, height, width);
  r.height = height;
  r.width = width;
  return r;
}

}  // namespace ascan
