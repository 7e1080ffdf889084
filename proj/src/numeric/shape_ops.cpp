#include <algorithm>
#include <numeric>

#include "ascan/autograd.hpp"
#include "ascan/ops.hpp"
#include "kernels.hpp"

namespace ascan {

namespace {

std::int64_t wrap_axis(std::int64_t axis, std::int64_t rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("axis out of range");
  return axis;
}

}  // namespace

Tensor reshape(const Tensor& a, Shape shape) {
  std::int64_t infer = -1, known = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: at most one -1 extent");
      infer = static_cast<std::int64_t>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[infer] = a.numel() / known;
  if (numel_of(shape) != a.numel())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  if (shape == a.shape()) return a;
  Tensor out = a.detach();  // shares storage; produced tensors are never mutated
  out.impl()->shape = shape;
  Shape original = a.shape();
  return detail::record(out, "reshape", {a},
                        [original](const Tensor& g) { return std::vector<Tensor>{reshape(g, original)}; });
}

Tensor permute(const Tensor& a, const std::vector<std::int64_t>& dims_in) {
  const auto rank = a.dim();
  if (static_cast<std::int64_t>(dims_in.size()) != rank) throw ShapeError("permute: rank mismatch");
  std::vector<std::int64_t> dims(rank);
  std::vector<bool> seen(rank, false);
  for (std::int64_t i = 0; i < rank; ++i) {
    dims[i] = wrap_axis(dims_in[i], rank);
    if (seen[dims[i]]) throw ShapeError("permute: repeated axis");
    seen[dims[i]] = true;
  }
  bool identity = true;
  for (std::int64_t i = 0; i < rank; ++i) identity = identity && dims[i] == i;
  if (identity) return a;

  Shape out_shape(rank);
  auto in_strides = strides_of(a.shape());
  std::vector<std::int64_t> src_strides(rank);
  for (std::int64_t i = 0; i < rank; ++i) {
    out_shape[i] = a.shape()[dims[i]];
    src_strides[i] = in_strides[dims[i]];
  }
  Tensor out = Tensor::empty(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    std::vector<std::int64_t> zero(rank, 0);
    kernels::for_each_broadcast(out_shape, src_strides, zero,
                                [&](std::int64_t o, std::int64_t i, std::int64_t) { po[o] = pa[i]; });
  });
  std::vector<std::int64_t> inverse(rank);
  for (std::int64_t i = 0; i < rank; ++i) inverse[dims[i]] = i;
  return detail::record(out, "permute", {a},
                        [inverse](const Tensor& g) { return std::vector<Tensor>{permute(g, inverse)}; });
}

Tensor transpose(const Tensor& a, std::int64_t d0, std::int64_t d1) {
  const auto rank = a.dim();
  d0 = wrap_axis(d0, rank);
  d1 = wrap_axis(d1, rank);
  std::vector<std::int64_t> dims(rank);
  std::iota(dims.begin(), dims.end(), 0);
  std::swap(dims[d0], dims[d1]);
  return permute(a, dims);
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const auto rank = parts[0].dim();
  axis = wrap_axis(axis, rank);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    if (p.dim() != rank || p.dtype() != parts[0].dtype())
      throw ShapeError("concat: rank or dtype mismatch");
    for (std::int64_t d = 0; d < rank; ++d)
      if (d != axis && p.shape()[d] != parts[0].shape()[d])
        throw ShapeError("concat: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    out_shape[axis] += p.shape()[axis];
    extents.push_back(p.shape()[axis]);
  }
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::int64_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];
  Tensor out = Tensor::empty(out_shape, parts[0].dtype());
  dispatch(out.dtype(), [&]<typename T>() {
    auto po = out.mutable_data<T>();
    const std::int64_t out_row = out_shape[axis] * inner;
    std::int64_t offset = 0;
    for (const auto& p : parts) {
      auto pp = p.data<T>();
      const std::int64_t row = p.shape()[axis] * inner;
      for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(pp.begin() + o * row, row, po.begin() + o * out_row + offset);
      offset += row;
    }
  });
  return detail::record(out, "concat", parts, [extents, axis](const Tensor& g) {
    std::vector<Tensor> grads;
    std::int64_t start = 0;
    for (auto e : extents) {
      grads.push_back(slice(g, axis, start, e));
      start += e;
    }
    return grads;
  });
}

Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t length) {
  axis = wrap_axis(axis, a.dim());
  const auto extent = a.shape()[axis];
  if (start < 0 || length <= 0 || start + length > extent)
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") outside extent " + std::to_string(extent));
  if (start == 0 && length == extent) return a;
  std::vector<std::int64_t> idx(length);
  std::iota(idx.begin(), idx.end(), start);
  return index_select(a, axis, idx);
}

Tensor index_select(const Tensor& a, std::int64_t axis, const std::vector<std::int64_t>& indices) {
  axis = wrap_axis(axis, a.dim());
  const auto extent = a.shape()[axis];
  for (auto i : indices)
    if (i < 0 || i >= extent) throw ShapeError("index_select: index out of range");
  if (indices.empty()) throw ShapeError("index_select: empty index list");
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (std::int64_t d = axis + 1; d < a.dim(); ++d) inner *= a.shape()[d];
  Shape out_shape = a.shape();
  out_shape[axis] = static_cast<std::int64_t>(indices.size());
  const auto count = out_shape[axis];
  Tensor out = Tensor::empty(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t j = 0; j < count; ++j)
        std::copy_n(pa.begin() + (o * extent + indices[j]) * inner, inner,
                    po.begin() + (o * count + j) * inner);
  });
  Shape in_shape = a.shape();
  return detail::record(out, "index_select", {a}, [=](const Tensor& g) {
    Tensor gx = Tensor::zeros(in_shape, g.dtype());
    dispatch(g.dtype(), [&]<typename T>() {
      auto pg = g.data<T>();
      auto px = gx.mutable_data<T>();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < count; ++j)
          for (std::int64_t i = 0; i < inner; ++i)
            px[(o * extent + indices[j]) * inner + i] += pg[(o * count + j) * inner + i];
    });
    return std::vector<Tensor>{gx};
  });
}

}  // namespace ascan
