#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "ascan/config.hpp"
#include "ascan/module.hpp"

namespace ascan {

/// Drops the whole branch per sample with probability `rate` in training
/// mode, scaling survivors by 1/(1-rate); identity in eval mode.
Tensor stochastic_depth(const Tensor& branch, double rate, bool training, Rng* rng);
/// Per-block rates ramping linearly from 0 to `max_rate` over `num_blocks`.
std::vector<double> drop_rate_ramp(double max_rate, int num_blocks);

/// Scaled dot-product attention over [N, h, L, d_h] operands; `bias`, when
/// given, is added to the logits and broadcasts as [h, Lq, Lk].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* bias = nullptr);

/// Sinusoidal encoding [N, dim] of (possibly fractional) timesteps.
Tensor timestep_embedding(const std::vector<double>& t, int dim, DType dtype);

/// Inputs of conditioned blocks.
struct Condition {
  Tensor time_embed;  // [N, time_dim]
  Tensor context;     // [N, Lc, context_dim]
};

struct BlockOptions {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  double drop_rate = 0.0;
  // attention blocks
  int heads = 1;
  int rel_grid = 0;        // side of the learned relative-position table; 0 = none
  bool rope = false;
  bool qk_norm = false;
  bool transition_only = false;
  // conditioning
  int time_dim = 0;     // > 0: convolution block takes a time shift
  int context_dim = 0;  // > 0: attention block adds cross-attention
};

class Block : public Module {
 public:
  /// x is [N, C, H, W]; attention blocks also take token sequences [N, L, d].
  virtual Tensor forward(const Tensor& x, const Condition* cond, Rng* rng) const = 0;
  const BlockOptions& options() const { return opts_; }

 protected:
  explicit Block(const BlockOptions& o) : opts_(o) {}
  BlockOptions opts_;
};

/// Conv + batch norm pair (no conv bias).
class ConvNorm : public Module {
 public:
  ConvNorm(const InitContext& init, int in, int out, int kernel, int stride);
  Tensor forward(const Tensor& x) const { return norm_->forward(conv_->forward(x)); }

 private:
  std::shared_ptr<Conv2d> conv_;
  std::shared_ptr<BatchNorm2d> norm_;
};

/// Optional 2x2 average pool, then 1x1 conv + batch norm. Used wherever a
/// residual must change stride or width.
class Transition : public Module {
 public:
  Transition(const InitContext& init, int in, int out, int stride);
  Tensor forward(const Tensor& x) const;

 private:
  int stride_;
  std::shared_ptr<Conv2d> conv_;
  std::shared_ptr<BatchNorm2d> norm_;
};

class SqueezeExcite : public Module {
 public:
  SqueezeExcite(const InitContext& init, int channels, int hidden);
  Tensor forward(const Tensor& x) const;

 private:
  std::shared_ptr<Linear> reduce_, expand_;
};

/// Squeeze-excite hidden width for a block of `out_channels`.
int se_hidden_width(int out_channels);

/// Y = shortcut(X) + P(SE(GeLU(BN(Conv3x3(X)) [+ time shift])))
class CBlock : public Block {
 public:
  CBlock(const InitContext& init, const BlockOptions& o);
  Tensor forward(const Tensor& x, const Condition* cond, Rng* rng) const override;
  /// BN(Conv3x3(x)) plus the time shift, before the activation.
  Tensor expanded(const Tensor& x, const Condition* cond) const;

 private:
  std::shared_ptr<ConvNorm> expand_;
  std::shared_ptr<Linear> time_proj_;
  std::shared_ptr<SqueezeExcite> se_;
  std::shared_ptr<ConvNorm> project_;
  std::shared_ptr<Transition> shortcut_;
};

struct AttentionProbe {
  Tensor q, k;     // [N, h, L, d_h] as they enter the logit product
  Tensor v;
  Tensor logits;   // [N, h, L, L] before softmax, including any position bias
};

/// Y = X + A(X^) [+ CrossA(X^, context)] + MLP(X^),  X^ = LN(GeLU(X))
class TBlock : public Block {
 public:
  TBlock(const InitContext& init, const BlockOptions& o);
  Tensor forward(const Tensor& x, const Condition* cond, Rng* rng) const override;
  /// Self-attention internals for a map input; token positions are offset
  /// by `origin` (forward uses the origin (0, 0)).
  AttentionProbe probe_self_attention(const Tensor& x, TokenPos origin = {}) const;

 private:
  Tensor tokens_forward(const Tensor& tokens, const std::vector<TokenPos>& pos, const Condition* cond,
                        Rng* rng) const;
  AttentionProbe self_logits(const Tensor& xhat, const std::vector<TokenPos>& pos) const;
  Tensor relative_bias(const std::vector<TokenPos>& pos) const;
  Tensor split_heads(const Tensor& t) const;  // [N, L, d] -> [N, h, L, d_h]
  Tensor merge_heads(const Tensor& t) const;  // inverse

  int dim_, heads_;
  std::shared_ptr<Transition> transition_;
  std::shared_ptr<LayerNorm> norm_;
  std::shared_ptr<Linear> qkv_, attn_out_, mlp_in_, mlp_out_;
  Tensor pos_table_;  // [heads, (2g-1)^2]
  Tensor q_gain_, k_gain_;
  std::shared_ptr<Linear> cross_q_, cross_k_, cross_v_, cross_out_;
  Tensor cross_q_gain_, cross_k_gain_;
};

std::shared_ptr<Block> make_block(BlockKind kind, const InitContext& init, const BlockOptions& o);

/// Two 3x3 conv + BN + GeLU layers, the first strided.
class Stem : public Module {
 public:
  Stem(const InitContext& init, int in, int out, int stride);
  Tensor forward(const Tensor& x) const;

 private:
  std::shared_ptr<Conv2d> conv1_, conv2_;
  std::shared_ptr<BatchNorm2d> norm1_, norm2_;
};

/// 1x1 conv to the embedding width + BN + GeLU, global average pool, linear.
class ClassifierHead : public Module {
 public:
  ClassifierHead(const InitContext& init, int in, int embed, int classes);
  Tensor pre_logits(const Tensor& x) const;  // [N, embed]
  Tensor forward(const Tensor& x) const;     // [N, classes]

 private:
  std::shared_ptr<Conv2d> conv_;
  std::shared_ptr<BatchNorm2d> norm_;
  std::shared_ptr<Linear> fc_;
};

/// Sinusoidal encoding followed by Linear -> SiLU -> Linear.
class TimeEmbedding : public Module {
 public:
  TimeEmbedding(const InitContext& init, int out_dim);
  Tensor forward(const std::vector<double>& t, DType dtype) const;
  int sinusoid_dim() const { return sin_dim_; }

 private:
  int sin_dim_;
  std::shared_ptr<Linear> fc1_, fc2_;
};

}  // namespace ascan
