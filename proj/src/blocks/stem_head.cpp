#include <algorithm>
#include <stdexcept>

#include "ascan/blocks.hpp"

namespace ascan {

Stem::Stem(const InitContext& init, int in, int out, int stride) {
  conv1_ = add_child("conv1", std::make_shared<Conv2d>(init, in, out, 3, stride, false));
  norm1_ = add_child("norm1", std::make_shared<BatchNorm2d>(init, out));
  conv2_ = add_child("conv2", std::make_shared<Conv2d>(init, out, out, 3, 1, false));
  norm2_ = add_child("norm2", std::make_shared<BatchNorm2d>(init, out));
}

Tensor Stem::forward(const Tensor& x) const {
  Tensor h = gelu(norm1_->forward(conv1_->forward(x)));
  return gelu(norm2_->forward(conv2_->forward(h)));
}

ClassifierHead::ClassifierHead(const InitContext& init, int in, int embed, int classes) {
  conv_ = add_child("conv", std::make_shared<Conv2d>(init, in, embed, 1, 1, false));
  norm_ = add_child("norm", std::make_shared<BatchNorm2d>(init, embed));
  fc_ = add_child("fc", std::make_shared<Linear>(init, embed, classes));
}

Tensor ClassifierHead::pre_logits(const Tensor& x) const {
  return mean(gelu(norm_->forward(conv_->forward(x))), {2, 3}, false);
}

Tensor ClassifierHead::forward(const Tensor& x) const { return fc_->forward(pre_logits(x)); }

TimeEmbedding::TimeEmbedding(const InitContext& init, int out_dim) {
  // a quarter of the output width, kept even
  sin_dim_ = std::max(2, (out_dim / 4) / 2 * 2);
  fc1_ = add_child("fc1", std::make_shared<Linear>(init, sin_dim_, out_dim));
  fc2_ = add_child("fc2", std::make_shared<Linear>(init, out_dim, out_dim));
}

Tensor TimeEmbedding::forward(const std::vector<double>& t, DType dtype) const {
  return fc2_->forward(silu(fc1_->forward(timestep_embedding(t, sin_dim_, dtype))));
}

}  // namespace ascan
