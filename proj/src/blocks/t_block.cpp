#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ascan/blocks.hpp"

namespace ascan {

namespace {

constexpr double kQkEps = 1e-6;

}  // namespace

TBlock::TBlock(const InitContext& init, const BlockOptions& o) : Block(o), dim_(o.out_channels), heads_(o.heads) {
  if (o.stride != 1 && o.stride != 2) throw std::invalid_argument("block stride must be 1 or 2");
  if (heads_ <= 0 || dim_ % heads_) throw std::invalid_argument("attention width must divide into heads");
  const bool entry = o.stride != 1 || o.in_channels != o.out_channels;
  if (entry) transition_ = add_child("transition", std::make_shared<Transition>(init, o.in_channels, dim_, o.stride));
  if (o.transition_only) {
    if (!entry) throw std::invalid_argument("transition-only T block must change stride or width");
    return;
  }
  const int dh = dim_ / heads_;
  if (o.rope && dh % 4) throw std::invalid_argument("rotary embedding needs a head width divisible by 4");
  norm_ = add_child("norm", std::make_shared<LayerNorm>(init, dim_));
  qkv_ = add_child("qkv", std::make_shared<Linear>(init, dim_, 3 * dim_));
  attn_out_ = add_child("attn_out", std::make_shared<Linear>(init, dim_, dim_));
  mlp_in_ = add_child("mlp_in", std::make_shared<Linear>(init, dim_, 4 * dim_));
  mlp_out_ = add_child("mlp_out", std::make_shared<Linear>(init, 4 * dim_, dim_));
  if (o.rel_grid > 0) {
    const int side = 2 * o.rel_grid - 1;
    auto pos = add_child("pos", std::make_shared<ModuleGroup>());
    pos_table_ = pos->param("table", init.truncated_normal({heads_, side * side}, 0.02));
  }
  if (o.qk_norm) {
    auto g = add_child("qk_norm", std::make_shared<ModuleGroup>());
    q_gain_ = g->param("q_gain", init.ones({dh}));
    k_gain_ = g->param("k_gain", init.ones({dh}));
  }
  if (o.context_dim > 0) {
    auto c = add_child("cross", std::make_shared<ModuleGroup>());
    cross_q_ = c->add("q", std::make_shared<Linear>(init, dim_, dim_));
    cross_k_ = c->add("k", std::make_shared<Linear>(init, o.context_dim, dim_));
    cross_v_ = c->add("v", std::make_shared<Linear>(init, o.context_dim, dim_));
    cross_out_ = c->add("out", std::make_shared<Linear>(init, dim_, dim_));
    if (o.qk_norm) {
      cross_q_gain_ = c->param("q_gain", init.ones({dh}));
      cross_k_gain_ = c->param("k_gain", init.ones({dh}));
    }
  }
}

Tensor TBlock::split_heads(const Tensor& t) const {
  const auto n = t.size(0), l = t.size(1);
  return permute(reshape(t, {n, l, heads_, dim_ / heads_}), {0, 2, 1, 3});
}

Tensor TBlock::merge_heads(const Tensor& t) const {
  const auto n = t.size(0), l = t.size(2);
  return reshape(permute(t, {0, 2, 1, 3}), {n, l, dim_});
}

Tensor TBlock::relative_bias(const std::vector<TokenPos>& pos) const {
  const std::int64_t g = opts_.rel_grid, side = 2 * g - 1;
  const auto l = static_cast<std::int64_t>(pos.size());
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(l * l));
  for (const auto& a : pos)
    for (const auto& b : pos) {
      // offsets beyond the table (inputs larger than the reference grid) are clipped
      const auto dr = std::clamp<std::int64_t>(a.row - b.row, -(g - 1), g - 1);
      const auto dc = std::clamp<std::int64_t>(a.col - b.col, -(g - 1), g - 1);
      idx.push_back((dr + g - 1) * side + dc + g - 1);
    }
  return reshape(index_select(pos_table_, 1, idx), {heads_, l, l});
}

AttentionProbe TBlock::self_logits(const Tensor& xhat, const std::vector<TokenPos>& pos) const {
  Tensor qkv = qkv_->forward(xhat);
  AttentionProbe p;
  p.q = split_heads(slice(qkv, 2, 0, dim_));
  p.k = split_heads(slice(qkv, 2, dim_, dim_));
  p.v = split_heads(slice(qkv, 2, 2 * dim_, dim_));
  if (opts_.qk_norm) {
    p.q = rms_norm(p.q, q_gain_, kQkEps);
    p.k = rms_norm(p.k, k_gain_, kQkEps);
  }
  if (opts_.rope) {
    p.q = rope_rotate(p.q, pos);
    p.k = rope_rotate(p.k, pos);
  }
  p.logits = scale(matmul(p.q, transpose(p.k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(dim_ / heads_)));
  if (pos_table_.defined()) p.logits = p.logits + relative_bias(pos);
  return p;
}

Tensor TBlock::tokens_forward(const Tensor& x, const std::vector<TokenPos>& pos, const Condition* cond,
                              Rng* rng) const {
  Tensor xhat = norm_->forward(gelu(x));
  AttentionProbe p = self_logits(xhat, pos);
  Tensor branch = attn_out_->forward(merge_heads(matmul(softmax(p.logits, -1), p.v)));
  if (cross_q_) {
    if (!cond || !cond->context.defined() || cond->context.dim() != 3 || cond->context.size(1) == 0)
      throw std::invalid_argument("conditioned T block needs a nonempty [N, L, d] context");
    Tensor q = split_heads(cross_q_->forward(xhat));
    Tensor k = split_heads(cross_k_->forward(cond->context));
    Tensor v = split_heads(cross_v_->forward(cond->context));
    if (opts_.qk_norm) {
      q = rms_norm(q, cross_q_gain_, kQkEps);
      k = rms_norm(k, cross_k_gain_, kQkEps);
    }
    branch = branch + cross_out_->forward(merge_heads(attention(q, k, v)));
  }
  branch = branch + mlp_out_->forward(gelu(mlp_in_->forward(xhat)));
  return x + stochastic_depth(branch, opts_.drop_rate, training(), rng);
}

Tensor TBlock::forward(const Tensor& input, const Condition* cond, Rng* rng) const {
  Tensor x = input;
  if (transition_) {
    if (x.dim() != 4) throw ShapeError("a T block that changes stride or width needs a feature map");
    x = transition_->forward(x);
    if (opts_.transition_only) return x;
  }
  if (x.dim() == 3) {
    std::vector<TokenPos> pos;
    for (std::int64_t i = 0; i < x.size(1); ++i) pos.push_back({0, i});
    return tokens_forward(x, pos, cond, rng);
  }
  if (x.dim() != 4) throw ShapeError("T block expects [N, C, H, W] or [N, L, d]");
  const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  Tensor tokens = reshape(permute(x, {0, 2, 3, 1}), {n, h * w, c});
  Tensor y = tokens_forward(tokens, grid_positions(h, w), cond, rng);
  return permute(reshape(y, {n, h, w, c}), {0, 3, 1, 2});
}

AttentionProbe TBlock::probe_self_attention(const Tensor& input, TokenPos origin) const {
  if (opts_.transition_only) throw std::logic_error("transition-only block has no attention");
  Tensor x = transition_ ? transition_->forward(input) : input;
  if (x.dim() != 4) throw ShapeError("probe expects a feature map");
  const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto pos = grid_positions(h, w);
  for (auto& p : pos) {
    p.row += origin.row;
    p.col += origin.col;
  }
  Tensor tokens = reshape(permute(x, {0, 2, 3, 1}), {n, h * w, c});
  return self_logits(norm_->forward(gelu(tokens)), pos);
}

}  // namespace ascan
