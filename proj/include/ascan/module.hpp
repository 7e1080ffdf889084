#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ascan/checkpoint.hpp"
#include "ascan/ops.hpp"
#include "ascan/random.hpp"
#include "ascan/tensor.hpp"

namespace ascan {

/// How parameters are created. Meta mode allocates nothing and is used to
/// count parameters of models too large to materialize.
struct InitContext {
  Rng* rng = nullptr;
  DType dtype = DType::kFloat32;
  bool meta = false;

  Tensor zeros(const Shape& s) const;
  Tensor ones(const Shape& s) const;
  Tensor normal(const Shape& s, double stddev) const;
  Tensor truncated_normal(const Shape& s, double stddev) const;
};

/// Parameter/buffer registry with hierarchical names ("stage1.block0.qkv.weight").
class Module {
 public:
  virtual ~Module() = default;
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<NamedTensor> named_buffers() const;
  std::vector<Tensor> parameters() const;
  std::int64_t parameter_count() const;

  void set_training(bool training);
  bool training() const { return training_; }

  /// Replaces parameter and buffer values by name (shape and dtype must
  /// match). Returns the names that were not found in `tensors`.
  std::vector<std::string> load_state(const std::vector<NamedTensor>& tensors);
  std::vector<NamedTensor> state() const;  // parameters then buffers

 protected:
  Tensor add_parameter(const std::string& name, Tensor value);
  Tensor add_buffer(const std::string& name, Tensor value);
  template <typename M>
  std::shared_ptr<M> add_child(const std::string& name, std::shared_ptr<M> child) {
    children_.emplace_back(name, child);
    return child;
  }

 private:
  void collect(const std::string& prefix, bool buffers, std::vector<NamedTensor>& out) const;

  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
  bool training_ = true;
};

/// Named container for sub-modules and loose parameters.
class ModuleGroup : public Module {
 public:
  template <typename M>
  std::shared_ptr<M> add(const std::string& name, std::shared_ptr<M> child) {
    return add_child(name, std::move(child));
  }
  Tensor param(const std::string& name, Tensor value) { return add_parameter(name, std::move(value)); }
  Tensor buffer(const std::string& name, Tensor value) { return add_buffer(name, std::move(value)); }
};

class Conv2d : public Module {
 public:
  // Weights: normal with std sqrt(2 / (k*k*out)); bias zeros.
  Conv2d(const InitContext& init, int in, int out, int kernel, int stride, bool bias);
  Tensor forward(const Tensor& x) const;
  const Tensor& weight() const { return weight_; }
  void zero_();  // zero weight and bias

 private:
  Tensor weight_;
  std::optional<Tensor> bias_;
  int stride_, padding_;
};

class Linear : public Module {
 public:
  // Weights: truncated normal std 0.02; bias zeros.
  Linear(const InitContext& init, int in, int out, bool bias = true);
  Tensor forward(const Tensor& x) const;
  const Tensor& weight() const { return weight_; }
  const std::optional<Tensor>& bias() const { return bias_; }
  void zero_();

 private:
  Tensor weight_;
  std::optional<Tensor> bias_;
};

class BatchNorm2d : public Module {
 public:
  BatchNorm2d(const InitContext& init, int channels, double eps = 1e-5, double momentum = 0.1);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor gamma_, beta_;
  mutable BatchNormState state_;
  double eps_;
};

class LayerNorm : public Module {
 public:
  LayerNorm(const InitContext& init, int dim, double eps = 1e-5);
  Tensor forward(const Tensor& x) const;  // normalizes the last axis

 private:
  Tensor gamma_, beta_;
  double eps_;
};

}  // namespace ascan
