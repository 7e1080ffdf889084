#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ascan/tensor.hpp"

namespace ascan {

// Elementwise binary ops broadcast with numpy semantics.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// Activations.
Tensor gelu(const Tensor& a);  // exact: x * Phi(x)
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// Softmax along `axis`, max-subtracted. NaN inputs propagate.
Tensor softmax(const Tensor& a, std::int64_t axis = -1);
Tensor log_softmax(const Tensor& a, std::int64_t axis = -1);

// Reductions.
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<std::int64_t>& axes, bool keepdim);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<std::int64_t>& axes, bool keepdim);
/// Sums broadcast dimensions away so the result has `shape`.
Tensor sum_to(const Tensor& a, const Shape& shape);

// Linear algebra.
/// Batched product of [..., M, K] and [..., K, N]; leading extents broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] · weight[out, in]^T + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias);

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::int64_t>& dims);
Tensor transpose(const Tensor& a, std::int64_t d0, std::int64_t d1);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t length);
Tensor index_select(const Tensor& a, std::int64_t axis, const std::vector<std::int64_t>& indices);

// Image ops, layout (N, C, H, W).
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int padding);
Tensor avg_pool2d(const Tensor& input, int kernel);  // stride == kernel
Tensor upsample_nearest2d(const Tensor& input, int factor);

// Normalization.
enum class NormKind { kBatch, kLayer, kRms };

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
};

/// Per-channel normalization of an (N, C, ...) tensor. Training mode uses
/// batch statistics and updates `state` in place; eval mode uses the
/// running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double eps);
/// Normalizes over the last axis to zero mean, unit variance, then affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
/// Scales the last axis to unit root-mean-square, then applies `gain`.
Tensor rms_norm(const Tensor& x, const std::optional<Tensor>& gain, double eps);

struct NormParams {
  std::optional<Tensor> gamma;
  std::optional<Tensor> beta;
  BatchNormState* batch_state = nullptr;
  bool training = false;
};

/// Single entry point over the three normalization kinds.
Tensor normalize(const Tensor& input, NormKind kind, const NormParams& params, double eps);

// Rotary position embedding over the last axis of [..., L, d_h]. The first
// half of d_h rotates with the row coordinate, the second half with the
// column coordinate; rotation pairs are adjacent elements of each half.
struct TokenPos {
  std::int64_t row = 0;
  std::int64_t col = 0;
};
Tensor rope_rotate(const Tensor& x, const std::vector<TokenPos>& positions, double base = 10000.0);
std::vector<TokenPos> grid_positions(std::int64_t height, std::int64_t width);

}  // namespace ascan
