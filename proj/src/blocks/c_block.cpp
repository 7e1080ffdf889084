#include <cmath>
#include <algorithm>
#include <stdexcept>

#include "ascan/blocks.hpp"

namespace ascan {

ConvNorm::ConvNorm(const InitContext& init, int in, int out, int kernel, int stride) {
  conv_ = add_child("conv", std::make_shared<Conv2d>(init, in, out, kernel, stride, false));
  norm_ = add_child("norm", std::make_shared<BatchNorm2d>(init, out));
}

Transition::Transition(const InitContext& init, int in, int out, int stride) : stride_(stride) {
  conv_ = add_child("conv", std::make_shared<Conv2d>(init, in, out, 1, 1, false));
  norm_ = add_child("norm", std::make_shared<BatchNorm2d>(init, out));
}

Tensor Transition::forward(const Tensor& x) const {
  return norm_->forward(conv_->forward(stride_ > 1 ? avg_pool2d(x, stride_) : x));
}

SqueezeExcite::SqueezeExcite(const InitContext& init, int channels, int hidden) {
  reduce_ = add_child("reduce", std::make_shared<Linear>(init, channels, hidden));
  expand_ = add_child("expand", std::make_shared<Linear>(init, hidden, channels));
}

Tensor SqueezeExcite::forward(const Tensor& x) const {
  Tensor pooled = mean(x, {2, 3}, false);
  Tensor gate = sigmoid(expand_->forward(gelu(reduce_->forward(pooled))));
  return x * reshape(gate, {x.size(0), x.size(1), 1, 1});
}

int se_hidden_width(int out_channels) {
  return std::max(1, static_cast<int>(std::lround(0.25 * out_channels)));
}

CBlock::CBlock(const InitContext& init, const BlockOptions& o) : Block(o) {
  if (o.stride != 1 && o.stride != 2) throw std::invalid_argument("block stride must be 1 or 2");
  const int mid = 4 * o.out_channels;
  expand_ = add_child("expand", std::make_shared<ConvNorm>(init, o.in_channels, mid, 3, o.stride));
  if (o.time_dim > 0) time_proj_ = add_child("time_proj", std::make_shared<Linear>(init, o.time_dim, mid));
  se_ = add_child("se", std::make_shared<SqueezeExcite>(init, mid, se_hidden_width(o.out_channels)));
  project_ = add_child("project", std::make_shared<ConvNorm>(init, mid, o.out_channels, 1, 1));
  if (o.stride != 1 || o.in_channels != o.out_channels)
    shortcut_ = add_child("shortcut", std::make_shared<Transition>(init, o.in_channels, o.out_channels, o.stride));
}

Tensor CBlock::expanded(const Tensor& x, const Condition* cond) const {
  if (time_proj_ && (!cond || !cond->time_embed.defined()))
    throw std::invalid_argument("conditioned C block needs a time embedding");
  Tensor h = expand_->forward(x);
  if (time_proj_) {
    Tensor shift = time_proj_->forward(silu(cond->time_embed));
    h = h + reshape(shift, {shift.size(0), shift.size(1), 1, 1});
  }
  return h;
}

Tensor CBlock::forward(const Tensor& x, const Condition* cond, Rng* rng) const {
  Tensor branch = project_->forward(se_->forward(gelu(expanded(x, cond))));
  branch = stochastic_depth(branch, opts_.drop_rate, training(), rng);
  return (shortcut_ ? shortcut_->forward(x) : x) + branch;
}

std::shared_ptr<Block> make_block(BlockKind kind, const InitContext& init, const BlockOptions& o) {
  if (is_conv(kind)) return std::make_shared<CBlock>(init, o);
  return std::make_shared<TBlock>(init, o);
}

}  // namespace ascan
