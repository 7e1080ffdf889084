#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ascan/autograd.hpp"
#include "ascan/ops.hpp"
#include "kernels.hpp"

namespace ascan {

namespace kernels {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> s(out.size(), 0);
  auto base = strides_of(in);
  std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) s[off + i] = in[i] == 1 ? 0 : base[i];
  return s;
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw std::invalid_argument(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                                " vs " + dtype_name(b.dtype()) + ")");
}

}  // namespace kernels

namespace {

using kernels::broadcast_shape;
using kernels::broadcast_strides;

enum class BinOp { kAdd, kSub, kMul, kDiv };

template <typename T>
inline T apply(BinOp op, T x, T y) {
  switch (op) {
    case BinOp::kAdd: return x + y;
    case BinOp::kSub: return x - y;
    case BinOp::kMul: return x * y;
    case BinOp::kDiv: return x / y;
  }
  return T(0);
}

Tensor binary_forward(const Tensor& a, const Tensor& b, BinOp op) {
  kernels::check_same_dtype(a, b, "elementwise");
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor out = Tensor::empty(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.mutable_data<T>();
    const std::int64_t n = static_cast<std::int64_t>(po.size());
    if (a.shape() == b.shape()) {
      for (std::int64_t i = 0; i < n; ++i) po[i] = apply(op, pa[i], pb[i]);
      return;
    }
    if (b.numel() == 1) {
      const T y = pb[0];
      if (a.numel() == n) {
        for (std::int64_t i = 0; i < n; ++i) po[i] = apply(op, pa[i], y);
        return;
      }
    }
    if (a.numel() == 1 && b.numel() == n) {
      const T x = pa[0];
      for (std::int64_t i = 0; i < n; ++i) po[i] = apply(op, x, pb[i]);
      return;
    }
    kernels::for_each_broadcast(out_shape, broadcast_strides(a.shape(), out_shape),
                                broadcast_strides(b.shape(), out_shape),
                                [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                                  po[o] = apply(op, pa[ia], pb[ib]);
                                });
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary_forward(a, b, BinOp::kAdd);
  Shape sa = a.shape(), sb = b.shape();
  return detail::record(out, "add", {a, b}, [sa, sb](const Tensor& g) {
    return std::vector<Tensor>{sum_to(g, sa), sum_to(g, sb)};
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary_forward(a, b, BinOp::kSub);
  Shape sa = a.shape(), sb = b.shape();
  return detail::record(out, "sub", {a, b}, [sa, sb](const Tensor& g) {
    return std::vector<Tensor>{sum_to(g, sa), sum_to(neg(g), sb)};
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary_forward(a, b, BinOp::kMul);
  Tensor da = a.detach(), db = b.detach();
  bool ga = a.requires_grad(), gb = b.requires_grad();
  return detail::record(out, "mul", {a, b}, [da, db, ga, gb](const Tensor& g) {
    return std::vector<Tensor>{ga ? sum_to(mul(g, db), da.shape()) : Tensor(),
                               gb ? sum_to(mul(g, da), db.shape()) : Tensor()};
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Tensor out = binary_forward(a, b, BinOp::kDiv);
  Tensor da = a.detach(), db = b.detach(), dout = out.detach();
  bool ga = a.requires_grad(), gb = b.requires_grad();
  return detail::record(out, "div", {a, b}, [db, dout, ga, gb, da](const Tensor& g) {
    Tensor gq = div(g, db);
    return std::vector<Tensor>{ga ? sum_to(gq, da.shape()) : Tensor(),
                               gb ? sum_to(neg(mul(gq, dout)), db.shape()) : Tensor()};
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

namespace {

// Elementwise unary op with derivative expressed from (x, y).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  Tensor out = Tensor::empty(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = static_cast<T>(fwd(static_cast<double>(pa[i])));
  });
  Tensor x = a.detach(), y = out.detach();
  return detail::record(out, name, {a}, [x, y, deriv](const Tensor& g) {
    Tensor gx = Tensor::empty(x.shape(), x.dtype());
    dispatch(x.dtype(), [&]<typename T>() {
      auto px = x.data<T>();
      auto py = y.data<T>();
      auto pg = g.data<T>();
      auto po = gx.mutable_data<T>();
      for (std::size_t i = 0; i < po.size(); ++i)
        po[i] = static_cast<T>(static_cast<double>(pg[i]) *
                               deriv(static_cast<double>(px[i]), static_cast<double>(py[i])));
    });
    return std::vector<Tensor>{gx};
  });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, "add_scalar", [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
  auto sig = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary(
      a, "silu", [sig](double x) { return x * sig(x); },
      [sig](double x, double) {
        double s = sig(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

namespace {

struct AxisSplit {
  std::int64_t outer, axis, inner;
};

AxisSplit split_axis(const Shape& shape, std::int64_t axis) {
  auto rank = static_cast<std::int64_t>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw ShapeError("axis out of range for shape " + shape_str(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::int64_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::int64_t i = axis + 1; i < rank; ++i) s.inner *= shape[i];
  return s;
}

template <typename T>
void softmax_kernel(std::span<const T> x, std::span<T> y, AxisSplit s, bool log_space) {
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t in = 0; in < s.inner; ++in) {
      const std::int64_t base = o * s.axis * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      bool has_nan = false;
      for (std::int64_t k = 0; k < s.axis; ++k) {
        double v = x[base + k * s.inner];
        if (std::isnan(v)) has_nan = true;
        mx = std::max(mx, v);
      }
      if (has_nan) {
        for (std::int64_t k = 0; k < s.axis; ++k)
          y[base + k * s.inner] = std::numeric_limits<T>::quiet_NaN();
        continue;
      }
      double total = 0.0;
      for (std::int64_t k = 0; k < s.axis; ++k) total += std::exp(double(x[base + k * s.inner]) - mx);
      double lse = mx + std::log(total);
      for (std::int64_t k = 0; k < s.axis; ++k) {
        double v = double(x[base + k * s.inner]);
        y[base + k * s.inner] = static_cast<T>(log_space ? v - lse : std::exp(v - mx) / total);
      }
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& a, std::int64_t axis) {
  AxisSplit s = split_axis(a.shape(), axis);
  Tensor out = Tensor::empty(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<typename T>() { softmax_kernel<T>(a.data<T>(), out.mutable_data<T>(), s, false); });
  Tensor y = out.detach();
  return detail::record(out, "softmax", {a}, [y, s](const Tensor& g) {
    Tensor gx = Tensor::empty(y.shape(), y.dtype());
    dispatch(y.dtype(), [&]<typename T>() {
      auto py = y.data<T>();
      auto pg = g.data<T>();
      auto po = gx.mutable_data<T>();
      for (std::int64_t o = 0; o < s.outer; ++o)
        for (std::int64_t in = 0; in < s.inner; ++in) {
          const std::int64_t base = o * s.axis * s.inner + in;
          double dot = 0.0;
          for (std::int64_t k = 0; k < s.axis; ++k)
            dot += double(pg[base + k * s.inner]) * double(py[base + k * s.inner]);
          for (std::int64_t k = 0; k < s.axis; ++k) {
            auto idx = base + k * s.inner;
            po[idx] = static_cast<T>(double(py[idx]) * (double(pg[idx]) - dot));
          }
        }
    });
    return std::vector<Tensor>{gx};
  });
}

Tensor log_softmax(const Tensor& a, std::int64_t axis) {
  AxisSplit s = split_axis(a.shape(), axis);
  Tensor out = Tensor::empty(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<typename T>() { softmax_kernel<T>(a.data<T>(), out.mutable_data<T>(), s, true); });
  Tensor y = out.detach();
  return detail::record(out, "log_softmax", {a}, [y, s](const Tensor& g) {
    Tensor gx = Tensor::empty(y.shape(), y.dtype());
    dispatch(y.dtype(), [&]<typename T>() {
      auto py = y.data<T>();
      auto pg = g.data<T>();
      auto po = gx.mutable_data<T>();
      for (std::int64_t o = 0; o < s.outer; ++o)
        for (std::int64_t in = 0; in < s.inner; ++in) {
          const std::int64_t base = o * s.axis * s.inner + in;
          double total = 0.0;
          for (std::int64_t k = 0; k < s.axis; ++k) total += double(pg[base + k * s.inner]);
          for (std::int64_t k = 0; k < s.axis; ++k) {
            auto idx = base + k * s.inner;
            po[idx] = static_cast<T>(double(pg[idx]) - std::exp(double(py[idx])) * total);
          }
        }
    });
    return std::vector<Tensor>{gx};
  });
}

namespace {

std::vector<std::int64_t> normalize_axes(const std::vector<std::int64_t>& axes, std::int64_t rank) {
  std::vector<std::int64_t> out;
  for (auto ax : axes) {
    if (ax < 0) ax += rank;
    if (ax < 0 || ax >= rank) throw ShapeError("reduction axis out of range");
    if (std::find(out.begin(), out.end(), ax) == out.end()) out.push_back(ax);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor sum_keepdim_raw(const Tensor& a, const std::vector<std::int64_t>& axes) {
  Shape out_shape = a.shape();
  for (auto ax : axes) out_shape[ax] = 1;
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    if (out.numel() == 1) {
      double total = 0.0;
      for (auto v : pa) total += v;
      po[0] = static_cast<T>(total);
      return;
    }
    // Accumulate in double to keep reductions order-stable across dtypes.
    std::vector<double> acc(po.size(), 0.0);
    auto ident = strides_of(a.shape());
    kernels::for_each_broadcast(a.shape(), ident, broadcast_strides(out_shape, a.shape()),
                                [&](std::int64_t, std::int64_t ia, std::int64_t io) { acc[io] += pa[ia]; });
    for (std::size_t i = 0; i < acc.size(); ++i) po[i] = static_cast<T>(acc[i]);
  });
  return out;
}

}  // namespace

Tensor sum(const Tensor& a, const std::vector<std::int64_t>& axes_in, bool keepdim) {
  auto axes = normalize_axes(axes_in, a.dim());
  Tensor kept = sum_keepdim_raw(a, axes);
  Shape in_shape = a.shape();
  Tensor out = kept;
  if (!keepdim) {
    Shape squeezed;
    for (std::int64_t i = 0; i < a.dim(); ++i)
      if (std::find(axes.begin(), axes.end(), i) == axes.end()) squeezed.push_back(in_shape[i]);
    out = kept.detach();
    out.impl()->shape = squeezed;
  }
  Shape kept_shape = kept.shape();
  return detail::record(out, "sum", {a}, [in_shape, kept_shape](const Tensor& g) {
    Tensor gk = reshape(g, kept_shape);
    Tensor expanded = Tensor::zeros(in_shape, g.dtype());
    return std::vector<Tensor>{add(expanded, gk)};
  });
}

Tensor sum(const Tensor& a) {
  std::vector<std::int64_t> all(a.dim());
  for (std::int64_t i = 0; i < a.dim(); ++i) all[i] = i;
  return sum(a, all, false);
}

Tensor mean(const Tensor& a, const std::vector<std::int64_t>& axes_in, bool keepdim) {
  auto axes = normalize_axes(axes_in, a.dim());
  std::int64_t count = 1;
  for (auto ax : axes) count *= a.shape()[ax];
  return scale(sum(a, axes, keepdim), 1.0 / static_cast<double>(count));
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  const auto rank = a.dim();
  const auto target_rank = static_cast<std::int64_t>(shape.size());
  if (target_rank > rank) throw ShapeError("sum_to: target rank exceeds source rank");
  std::vector<std::int64_t> axes;
  for (std::int64_t i = 0; i < rank; ++i) {
    std::int64_t ti = i - (rank - target_rank);
    if (ti < 0) {
      axes.push_back(i);
    } else if (shape[ti] == 1 && a.shape()[i] != 1) {
      axes.push_back(i);
    } else if (shape[ti] != a.shape()[i]) {
      throw ShapeError("sum_to: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
  }
  Tensor s = axes.empty() ? a : sum(a, axes, true);
  return reshape(s, shape);
}

}  // namespace ascan
