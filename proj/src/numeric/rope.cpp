#include <cmath>

#include "ascan/autograd.hpp"
#include "ascan/ops.hpp"

namespace ascan {

namespace {

// Rotates adjacent pairs in each half of the last axis; sign=-1 applies the
// inverse rotation (used for the gradient, since rotations are orthogonal).
Tensor rope_apply(const Tensor& x, const std::vector<TokenPos>& positions, double base, double sign) {
  const std::int64_t dh = x.size(-1);
  const std::int64_t len = x.size(-2);
  const std::int64_t half = dh / 2;
  const std::int64_t pairs = half / 2;
  std::vector<double> freq(pairs);
  for (std::int64_t i = 0; i < pairs; ++i)
    freq[i] = std::pow(base, -static_cast<double>(2 * i) / static_cast<double>(half));
  const std::int64_t groups = x.numel() / (len * dh);
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t l = 0; l < len; ++l) {
      const double coord[2] = {static_cast<double>(positions[l].row),
                               static_cast<double>(positions[l].col)};
      for (int axis = 0; axis < 2; ++axis)
        for (std::int64_t i = 0; i < pairs; ++i) {
          const double angle = sign * coord[axis] * freq[i];
          const double cs = std::cos(angle), sn = std::sin(angle);
          const std::int64_t j = axis * half + 2 * i;
          for (std::int64_t g = 0; g < groups; ++g) {
            const std::int64_t off = (g * len + l) * dh + j;
            const double a = px[off], b = px[off + 1];
            po[off] = static_cast<T>(a * cs - b * sn);
            po[off + 1] = static_cast<T>(a * sn + b * cs);
          }
        }
    }
  });
  return out;
}

}  // namespace

Tensor rope_rotate(const Tensor& x, const std::vector<TokenPos>& positions, double base) {
  if (x.dim() < 2) throw ShapeError("rope_rotate needs [..., L, d_h]");
  const std::int64_t dh = x.size(-1);
  if (dh % 4 != 0)
    throw ShapeError("rope_rotate: head dim " + std::to_string(dh) + " not divisible by 4");
  if (static_cast<std::int64_t>(positions.size()) != x.size(-2))
    throw ShapeError("rope_rotate: " + std::to_string(positions.size()) + " positions for " +
                     std::to_string(x.size(-2)) + " tokens");
  Tensor out = rope_apply(x, positions, base, 1.0);
  return detail::record(out, "rope_rotate", {x}, [positions, base](const Tensor& g) {
    return std::vector<Tensor>{rope_apply(g, positions, base, -1.0)};
  });
}

std::vector<TokenPos> grid_positions(std::int64_t height, std::int64_t width) {
  std::vector<TokenPos> pos;
  pos.reserve(static_cast<std::size_t>(height * width));
  for (std::int64_t r = 0; r < height; ++r)
    for (std::int64_t c = 0; c < width; ++c) pos.push_back({r, c});
  return pos;
}

}  // namespace ascan
