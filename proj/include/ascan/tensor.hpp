#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "ascan/memory.hpp"

namespace ascan {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);
const char* dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

/// Thrown when operand extents do not fit an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
}

/// Calls `fn.template operator()<T>()` with T matching `dtype`.
template <typename Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::kFloat32) return fn.template operator()<float>();
  return fn.template operator()<double>();
}

namespace detail {

struct Node;

using Storage = std::variant<TrackedVector<float>, TrackedVector<double>>;

struct TensorImpl {
  Shape shape;
  DType dtype = DType::kFloat32;
  std::shared_ptr<Storage> storage;  // null for meta tensors
  bool requires_grad = false;
  std::shared_ptr<TensorImpl> grad;
  std::shared_ptr<Node> grad_fn;
};

}  // namespace detail

/// Reference-counted handle to a dense row-major array.
///
/// Copies share the underlying impl. Tensors produced by operations are
/// never written after construction; leaf tensors (parameters, buffers)
/// may be updated in place by optimizers through `mutable_data`.
class Tensor {
 public:
  Tensor() = default;

  static Tensor empty(Shape shape, DType dtype = DType::kFloat32);
  static Tensor zeros(Shape shape, DType dtype = DType::kFloat32);
  static Tensor ones(Shape shape, DType dtype = DType::kFloat32);
  static Tensor full(Shape shape, double value, DType dtype = DType::kFloat32);
  static Tensor scalar(double value, DType dtype = DType::kFloat32);
  static Tensor from_vector(Shape shape, const std::vector<double>& values,
                            DType dtype = DType::kFloat32);
  /// Shape-only tensor without storage; used to count parameters of
  /// models too large to materialize.
  static Tensor meta(Shape shape, DType dtype = DType::kFloat32);

  bool defined() const { return static_cast<bool>(impl_); }
  bool is_meta() const;
  const Shape& shape() const;
  std::int64_t dim() const;
  std::int64_t size(std::int64_t axis) const;
  std::int64_t numel() const;
  DType dtype() const;

  template <typename T>
  std::span<const T> data() const;
  template <typename T>
  std::span<T> mutable_data();

  double item() const;
  double at(std::int64_t flat_index) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;
  /// Accumulated gradient; undefined tensor if none yet.
  Tensor grad() const;
  void zero_grad();
  void set_grad(const Tensor& g);

  /// Reverse-mode sweep from a scalar. Gradients accumulate into leaves.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;
  Tensor to(DType dtype) const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  void check_defined() const;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Row-major strides for a shape.
std::vector<std::int64_t> strides_of(const Shape& shape);

}  // namespace ascan
