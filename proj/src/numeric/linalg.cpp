#include "ascan/autograd.hpp"
#include "ascan/ops.hpp"
#include "kernels.hpp"

namespace ascan {

namespace {

Tensor matmul_forward(const Tensor& a, const Tensor& b) {
  kernels::check_same_dtype(a, b, "matmul");
  if (a.dim() < 2 || b.dim() < 2)
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::int64_t m = a.size(-2), k = a.size(-1), k2 = b.size(-2), n = b.size(-1);
  if (k != k2)
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch = kernels::broadcast_shape(batch_a, batch_b);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out = Tensor::empty(out_shape, a.dtype());
  auto sa = kernels::broadcast_strides(batch_a, batch);
  auto sb = kernels::broadcast_strides(batch_b, batch);
  dispatch(a.dtype(), [&]<typename T>() {
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    T* po = out.mutable_data<T>().data();
    kernels::for_each_broadcast(batch, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
      kernels::gemm(pa + ia * m * k, pb + ib * k * n, po + o * m * n, m, k, n, false);
    });
  });
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out = matmul_forward(a, b);
  Tensor da = a.detach(), db = b.detach();
  bool ga = a.requires_grad(), gb = b.requires_grad();
  return detail::record(out, "matmul", {a, b}, [da, db, ga, gb](const Tensor& g) {
    return std::vector<Tensor>{
        ga ? sum_to(matmul(g, transpose(db, -1, -2)), da.shape()) : Tensor(),
        gb ? sum_to(matmul(transpose(da, -1, -2), g), db.shape()) : Tensor()};
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
  kernels::check_same_dtype(x, weight, "linear");
  if (weight.dim() != 2) throw ShapeError("linear weight must be [out, in]");
  const std::int64_t in = weight.size(1), out_features = weight.size(0);
  if (x.dim() < 1 || x.size(-1) != in)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not end in " +
                     std::to_string(in));
  if (bias && (bias->dim() != 1 || bias->size(0) != out_features))
    throw ShapeError("linear: bias must be [" + std::to_string(out_features) + "]");
  const std::int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_features;
  Tensor out = Tensor::empty(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    T* po = out.mutable_data<T>().data();
    kernels::gemm_nt(x.data<T>().data(), weight.data<T>().data(), po, rows, in, out_features, false);
    if (bias) {
      auto pb = bias->data<T>();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < out_features; ++j) po[r * out_features + j] += pb[j];
    }
  });
  Tensor dx = x.detach(), dw = weight.detach();
  bool gx = x.requires_grad(), gw = weight.requires_grad();
  bool has_bias = bias.has_value();
  std::vector<Tensor> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return detail::record(out, "linear", inputs, [=](const Tensor& g) {
    std::vector<Tensor> grads(has_bias ? 3 : 2);
    dispatch(dx.dtype(), [&]<typename T>() {
      const T* pg = g.data<T>().data();
      if (gx) {
        Tensor t = Tensor::empty(dx.shape(), dx.dtype());
        kernels::gemm(pg, dw.data<T>().data(), t.mutable_data<T>().data(), rows, out_features, in,
                      false);
        grads[0] = t;
      }
      if (gw) {
        Tensor t = Tensor::empty(dw.shape(), dw.dtype());
        kernels::gemm_tn(pg, dx.data<T>().data(), t.mutable_data<T>().data(), out_features, rows,
                         in, false);
        grads[1] = t;
      }
      if (has_bias) {
        Tensor t = Tensor::zeros({out_features}, dx.dtype());
        auto pb = t.mutable_data<T>();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < out_features; ++j) pb[j] += pg[r * out_features + j];
        grads[2] = t;
      }
    });
    return grads;
  });
}

}  // namespace ascan
