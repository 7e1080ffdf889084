#include <cmath>
#include <stdexcept>

#include "ascan/blocks.hpp"

namespace ascan {

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* bias) {
  if (q.dim() != 4 || k.dim() != 4 || v.dim() != 4) throw ShapeError("attention expects [N, h, L, d_h] operands");
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.size(3)));
  Tensor logits = scale(matmul(q, transpose(k, 2, 3)), inv);
  if (bias) logits = logits + *bias;
  return matmul(softmax(logits, -1), v);
}

Tensor timestep_embedding(const std::vector<double>& t, int dim, DType dtype) {
  if (dim < 2 || dim % 2) throw std::invalid_argument("timestep embedding width must be even");
  const int half = dim / 2;
  std::vector<double> out(t.size() * dim);
  for (std::size_t n = 0; n < t.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double f = std::exp(-std::log(10000.0) * i / half);
      out[n * dim + i] = std::cos(t[n] * f);
      out[n * dim + half + i] = std::sin(t[n] * f);
    }
  return Tensor::from_vector({static_cast<std::int64_t>(t.size()), dim}, out, dtype);
}

}  // namespace ascan
