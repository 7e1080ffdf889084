#include "ascan/autograd.hpp"
#include "ascan/ops.hpp"
#include "kernels.hpp"

namespace ascan {

namespace {

struct ConvGeom {
  std::int64_t n, cin, h, w, cout, k, stride, pad, oh, ow;
  std::int64_t patch() const { return cin * k * k; }
  std::int64_t pixels() const { return oh * ow; }
};

// cols[(c*k + ky)*k + kx, oy*ow + ox] = x[c, oy*s+ky-p, ox*s+kx-p] (zero outside)
template <typename T>
void im2col(const T* x, T* cols, const ConvGeom& g) {
  for (std::int64_t c = 0; c < g.cin; ++c)
    for (std::int64_t ky = 0; ky < g.k; ++ky)
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((c * g.k + ky) * g.k + kx) * g.pixels();
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride + ky - g.pad;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride + kx - g.pad;
            row[oy * g.ow + ox] =
                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? x[(c * g.h + iy) * g.w + ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, T* x, const ConvGeom& g) {
  for (std::int64_t c = 0; c < g.cin; ++c)
    for (std::int64_t ky = 0; ky < g.k; ++ky)
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((c * g.k + ky) * g.k + kx) * g.pixels();
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.w) x[(c * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
          }
        }
      }
}

ConvGeom conv_geometry(const Tensor& input, const Tensor& weight, int stride, int padding) {
  if (input.dim() != 4) throw ShapeError("conv2d input must be [N,C,H,W], got " + shape_str(input.shape()));
  if (weight.dim() != 4 || weight.size(2) != weight.size(3))
    throw ShapeError("conv2d weight must be [Cout,Cin,K,K], got " + shape_str(weight.shape()));
  ConvGeom g{};
  g.n = input.size(0);
  g.cin = input.size(1);
  g.h = input.size(2);
  g.w = input.size(3);
  g.cout = weight.size(0);
  g.k = weight.size(2);
  g.stride = stride;
  g.pad = padding;
  if (weight.size(1) != g.cin)
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) + " channels, weight expects " +
                     std::to_string(weight.size(1)));
  if (g.k != 1 && g.k != 3) throw ShapeError("conv2d: kernel size must be 1 or 3");
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  if (padding < 0) throw ShapeError("conv2d: negative padding");
  if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k)
    throw ShapeError("conv2d: input " + shape_str(input.shape()) + " smaller than kernel");
  g.oh = (g.h + 2 * padding - g.k) / stride + 1;
  g.ow = (g.w + 2 * padding - g.k) / stride + 1;
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int padding) {
  kernels::check_same_dtype(input, weight, "conv2d");
  const ConvGeom g = conv_geometry(input, weight, stride, padding);
  if (bias && (bias->dim() != 1 || bias->size(0) != g.cout))
    throw ShapeError("conv2d: bias must be [" + std::to_string(g.cout) + "]");
  const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
  Tensor out = Tensor::empty({g.n, g.cout, g.oh, g.ow}, input.dtype());
  dispatch(input.dtype(), [&]<typename T>() {
    const T* px = input.data<T>().data();
    const T* pw = weight.data<T>().data();
    T* po = out.mutable_data<T>().data();
    std::vector<T> cols(pointwise ? 0 : g.patch() * g.pixels());
    for (std::int64_t s = 0; s < g.n; ++s) {
      const T* xs = px + s * g.cin * g.h * g.w;
      const T* src = xs;
      if (!pointwise) {
        im2col(xs, cols.data(), g);
        src = cols.data();
      }
      T* os = po + s * g.cout * g.pixels();
      kernels::gemm(pw, src, os, g.cout, g.patch(), g.pixels(), false);
      if (bias) {
        auto pb = bias->data<T>();
        for (std::int64_t c = 0; c < g.cout; ++c)
          for (std::int64_t p = 0; p < g.pixels(); ++p) os[c * g.pixels() + p] += pb[c];
      }
    }
  });

  Tensor dx = input.detach(), dw = weight.detach();
  const bool gx = input.requires_grad(), gw = weight.requires_grad(), has_bias = bias.has_value();
  std::vector<Tensor> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  return detail::record(out, "conv2d", inputs, [=](const Tensor& grad) {
    std::vector<Tensor> grads(has_bias ? 3 : 2);
    dispatch(dx.dtype(), [&]<typename T>() {
      const T* pg = grad.data<T>().data();
      const T* px = dx.data<T>().data();
      const T* pw = dw.data<T>().data();
      Tensor gin = gx ? Tensor::zeros(dx.shape(), dx.dtype()) : Tensor();
      Tensor gwt = gw ? Tensor::zeros(dw.shape(), dw.dtype()) : Tensor();
      T* pgi = gx ? gin.mutable_data<T>().data() : nullptr;
      T* pgw = gw ? gwt.mutable_data<T>().data() : nullptr;
      std::vector<T> cols(g.patch() * g.pixels());
      for (std::int64_t s = 0; s < g.n; ++s) {
        const T* gs = pg + s * g.cout * g.pixels();
        if (gw) {
          const T* src = px + s * g.cin * g.h * g.w;
          if (!pointwise) {
            im2col(src, cols.data(), g);
            src = cols.data();
          }
          kernels::gemm_nt(gs, src, pgw, g.cout, g.pixels(), g.patch(), true);
        }
        if (gx) {
          T* xs = pgi + s * g.cin * g.h * g.w;
          if (pointwise) {
            kernels::gemm_tn(pw, gs, xs, g.patch(), g.cout, g.pixels(), true);
          } else {
            kernels::gemm_tn(pw, gs, cols.data(), g.patch(), g.cout, g.pixels(), false);
            col2im(cols.data(), xs, g);
          }
        }
      }
      grads[0] = gin;
      grads[1] = gwt;
      if (has_bias) {
        Tensor gb = Tensor::zeros({g.cout}, dx.dtype());
        auto pb = gb.mutable_data<T>();
        for (std::int64_t s = 0; s < g.n; ++s)
          for (std::int64_t c = 0; c < g.cout; ++c)
            for (std::int64_t p = 0; p < g.pixels(); ++p) pb[c] += pg[(s * g.cout + c) * g.pixels() + p];
        grads[2] = gb;
      }
    });
    return grads;
  });
}

Tensor avg_pool2d(const Tensor& input, int kernel) {
  if (input.dim() != 4) throw ShapeError("avg_pool2d input must be [N,C,H,W]");
  if (kernel < 1) throw ShapeError("avg_pool2d: kernel must be positive");
  const std::int64_t n = input.size(0), c = input.size(1), h = input.size(2), w = input.size(3);
  if (h % kernel || w % kernel)
    throw ShapeError("avg_pool2d: spatial " + shape_str(input.shape()) + " not divisible by " +
                     std::to_string(kernel));
  const std::int64_t oh = h / kernel, ow = w / kernel;
  const double inv = 1.0 / (kernel * kernel);
  Tensor out = Tensor::zeros({n, c, oh, ow}, input.dtype());
  dispatch(input.dtype(), [&]<typename T>() {
    auto px = input.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t plane = 0; plane < n * c; ++plane)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          po[(plane * oh + y / kernel) * ow + x / kernel] += static_cast<T>(px[(plane * h + y) * w + x] * inv);
  });
  Shape in_shape = input.shape();
  return detail::record(out, "avg_pool2d", {input}, [=](const Tensor& g) {
    Tensor gx = Tensor::empty(in_shape, g.dtype());
    dispatch(g.dtype(), [&]<typename T>() {
      auto pg = g.data<T>();
      auto px = gx.mutable_data<T>();
      for (std::int64_t plane = 0; plane < n * c; ++plane)
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t x = 0; x < w; ++x)
            px[(plane * h + y) * w + x] = static_cast<T>(pg[(plane * oh + y / kernel) * ow + x / kernel] * inv);
    });
    return std::vector<Tensor>{gx};
  });
}

Tensor upsample_nearest2d(const Tensor& input, int factor) {
  if (input.dim() != 4) throw ShapeError("upsample_nearest2d input must be [N,C,H,W]");
  if (factor < 1) throw ShapeError("upsample_nearest2d: factor must be positive");
  const std::int64_t n = input.size(0), c = input.size(1), h = input.size(2), w = input.size(3);
  const std::int64_t oh = h * factor, ow = w * factor;
  Tensor out = Tensor::empty({n, c, oh, ow}, input.dtype());
  dispatch(input.dtype(), [&]<typename T>() {
    auto px = input.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t plane = 0; plane < n * c; ++plane)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x)
          po[(plane * oh + y) * ow + x] = px[(plane * h + y / factor) * w + x / factor];
  });
  Shape in_shape = input.shape();
  return detail::record(out, "upsample_nearest2d", {input}, [=](const Tensor& g) {
    Tensor gx = Tensor::zeros(in_shape, g.dtype());
    dispatch(g.dtype(), [&]<typename T>() {
      auto pg = g.data<T>();
      auto px = gx.mutable_data<T>();
      for (std::int64_t plane = 0; plane < n * c; ++plane)
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t x = 0; x < ow; ++x)
            px[(plane * h + y / factor) * w + x / factor] += pg[(plane * oh + y) * ow + x];
    });
    return std::vector<Tensor>{gx};
  });
}

}  // namespace ascan
