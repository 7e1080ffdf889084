#include <cmath>

#include "ascan/autograd.hpp"
#include "ascan/log.hpp"
#include "ascan/ops.hpp"
#include "kernels.hpp"

namespace ascan {

namespace {

void check_eps(double eps) {
  if (!(eps > 0)) throw std::invalid_argument("normalization eps must be positive");
}

void check_vector(const Tensor& t, std::int64_t n, const char* what) {
  if (t.dim() != 1 || t.size(0) != n)
    throw ShapeError(std::string(what) + " must have shape [" + std::to_string(n) + "], got " +
                     shape_str(t.shape()));
}

}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training, double eps) {
  check_eps(eps);
  if (x.dim() < 2) throw ShapeError("batch_norm input must be [N,C,...]");
  const std::int64_t n = x.size(0), c = x.size(1);
  const std::int64_t spatial = x.numel() / (n * c);
  const std::int64_t count = n * spatial;
  check_vector(gamma, c, "batch_norm gamma");
  check_vector(beta, c, "batch_norm beta");
  check_vector(state.running_mean, c, "batch_norm running_mean");
  check_vector(state.running_var, c, "batch_norm running_var");
  if (training && n == 1)
    warn("batch_norm in training mode with batch size 1: statistics come from a single sample");

  std::vector<double> mu(c), rstd(c);
  Tensor xhat = Tensor::empty(x.shape(), x.dtype());
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto px = x.data<T>();
    auto pg = gamma.data<T>();
    auto pb = beta.data<T>();
    auto ph = xhat.mutable_data<T>();
    auto po = out.mutable_data<T>();
    auto rm = state.running_mean.mutable_data<T>();
    auto rv = state.running_var.mutable_data<T>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double mean, var;
      if (training) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t p = 0; p < spatial; ++p) s += px[(i * c + ch) * spatial + p];
        mean = s / count;
        double ss = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t p = 0; p < spatial; ++p) {
            double d = px[(i * c + ch) * spatial + p] - mean;
            ss += d * d;
          }
        var = ss / count;
        double unbiased = count > 1 ? ss / (count - 1) : var;
        rm[ch] = static_cast<T>((1 - state.momentum) * rm[ch] + state.momentum * mean);
        rv[ch] = static_cast<T>((1 - state.momentum) * rv[ch] + state.momentum * unbiased);
      } else {
        mean = rm[ch];
        var = rv[ch];
      }
      mu[ch] = mean;
      rstd[ch] = 1.0 / std::sqrt(var + eps);
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t p = 0; p < spatial; ++p) {
          auto idx = (i * c + ch) * spatial + p;
          double h = (px[idx] - mean) * rstd[ch];
          ph[idx] = static_cast<T>(h);
          po[idx] = static_cast<T>(h * pg[ch] + pb[ch]);
        }
    }
  });

  Tensor dg = gamma.detach();
  return detail::record(out, "batch_norm", {x, gamma, beta}, [=](const Tensor& g) {
    Tensor gx = Tensor::empty(xhat.shape(), xhat.dtype());
    Tensor ggamma = Tensor::empty({c}, xhat.dtype());
    Tensor gbeta = Tensor::empty({c}, xhat.dtype());
    dispatch(xhat.dtype(), [&]<typename T>() {
      auto pgo = g.data<T>();
      auto ph = xhat.data<T>();
      auto pgam = dg.data<T>();
      auto px = gx.mutable_data<T>();
      auto pgg = ggamma.mutable_data<T>();
      auto pgb = gbeta.mutable_data<T>();
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double sg = 0.0, sgh = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t p = 0; p < spatial; ++p) {
            auto idx = (i * c + ch) * spatial + p;
            sg += pgo[idx];
            sgh += double(pgo[idx]) * ph[idx];
          }
        pgb[ch] = static_cast<T>(sg);
        pgg[ch] = static_cast<T>(sgh);
        const double k = pgam[ch] * rstd[ch];
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t p = 0; p < spatial; ++p) {
            auto idx = (i * c + ch) * spatial + p;
            px[idx] = training
                          ? static_cast<T>(k * (pgo[idx] - sg / count - ph[idx] * sgh / count))
                          : static_cast<T>(k * pgo[idx]);
          }
      }
    });
    return std::vector<Tensor>{gx, ggamma, gbeta};
  });
}

namespace {

// Shared kernel for layer (centered) and rms (uncentered) normalization over
// the last axis. gamma/beta may be undefined.
Tensor last_axis_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                      bool centered, const char* name) {
  check_eps(eps);
  if (x.dim() < 1) throw ShapeError(std::string(name) + " needs rank >= 1");
  const std::int64_t d = x.size(-1);
  const std::int64_t rows = x.numel() / d;
  if (gamma.defined()) check_vector(gamma, d, "norm gain");
  if (beta.defined()) check_vector(beta, d, "norm shift");
  std::vector<double> rstd(rows);
  Tensor xhat = Tensor::empty(x.shape(), x.dtype());
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto px = x.data<T>();
    auto ph = xhat.mutable_data<T>();
    auto po = out.mutable_data<T>();
    const T* pg = gamma.defined() ? gamma.data<T>().data() : nullptr;
    const T* pb = beta.defined() ? beta.data<T>().data() : nullptr;
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* xr = px.data() + r * d;
      double mean = 0.0;
      if (centered) {
        for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
      }
      double ss = 0.0;
      for (std::int64_t j = 0; j < d; ++j) ss += (xr[j] - mean) * (xr[j] - mean);
      rstd[r] = 1.0 / std::sqrt(ss / d + eps);
      for (std::int64_t j = 0; j < d; ++j) {
        double h = (xr[j] - mean) * rstd[r];
        ph[r * d + j] = static_cast<T>(h);
        double y = pg ? h * pg[j] : h;
        po[r * d + j] = static_cast<T>(pb ? y + pb[j] : y);
      }
    }
  });
  Tensor dg = gamma.defined() ? gamma.detach() : Tensor();
  const bool has_gamma = gamma.defined(), has_beta = beta.defined();
  std::vector<Tensor> inputs{x};
  if (has_gamma) inputs.push_back(gamma);
  if (has_beta) inputs.push_back(beta);
  return detail::record(out, name, inputs, [=](const Tensor& g) {
    Tensor gx = Tensor::empty(xhat.shape(), xhat.dtype());
    Tensor ggamma = has_gamma ? Tensor::zeros({d}, xhat.dtype()) : Tensor();
    Tensor gbeta = has_beta ? Tensor::zeros({d}, xhat.dtype()) : Tensor();
    dispatch(xhat.dtype(), [&]<typename T>() {
      auto pgo = g.data<T>();
      auto ph = xhat.data<T>();
      auto px = gx.mutable_data<T>();
      const T* pgam = has_gamma ? dg.data<T>().data() : nullptr;
      T* pgg = has_gamma ? ggamma.mutable_data<T>().data() : nullptr;
      T* pgb = has_beta ? gbeta.mutable_data<T>().data() : nullptr;
      std::vector<double> gh(d);
      for (std::int64_t r = 0; r < rows; ++r) {
        double mean_gh = 0.0, mean_ghh = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          auto idx = r * d + j;
          if (pgg) pgg[j] += pgo[idx] * ph[idx];
          if (pgb) pgb[j] += pgo[idx];
          gh[j] = pgam ? double(pgo[idx]) * pgam[j] : double(pgo[idx]);
          mean_gh += gh[j];
          mean_ghh += gh[j] * ph[idx];
        }
        mean_gh /= d;
        mean_ghh /= d;
        for (std::int64_t j = 0; j < d; ++j) {
          auto idx = r * d + j;
          double v = gh[j] - ph[idx] * mean_ghh;
          if (centered) v -= mean_gh;
          px[idx] = static_cast<T>(rstd[r] * v);
        }
      }
    });
    std::vector<Tensor> grads{gx};
    if (has_gamma) grads.push_back(ggamma);
    if (has_beta) grads.push_back(gbeta);
    return grads;
  });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  return last_axis_norm(x, gamma, beta, eps, true, "layer_norm");
}

Tensor rms_norm(const Tensor& x, const std::optional<Tensor>& gain, double eps) {
  return last_axis_norm(x, gain ? *gain : Tensor(), Tensor(), eps, false, "rms_norm");
}

Tensor normalize(const Tensor& input, NormKind kind, const NormParams& params, double eps) {
  switch (kind) {
    case NormKind::kBatch: {
      if (!params.gamma || !params.beta || !params.batch_state)
        throw std::invalid_argument("batch normalization needs gamma, beta and running state");
      return batch_norm(input, *params.gamma, *params.beta, *params.batch_state, params.training, eps);
    }
    case NormKind::kLayer: {
      check_eps(eps);
      return last_axis_norm(input, params.gamma ? *params.gamma : Tensor(),
                            params.beta ? *params.beta : Tensor(), eps, true, "layer_norm");
    }
    case NormKind::kRms:
      return rms_norm(input, params.gamma, eps);
  }
  throw std::invalid_argument("unknown normalization kind");
}

}  // namespace ascan
