#include "ascan/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "ascan/autograd.hpp"
#include "ascan/ops.hpp"

namespace ascan {

namespace {

std::atomic<std::size_t> g_current_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};

thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Storage> make_storage(DType dtype, std::int64_t n) {
  if (dtype == DType::kFloat32)
    return std::make_shared<detail::Storage>(TrackedVector<float>(static_cast<std::size_t>(n)));
  return std::make_shared<detail::Storage>(TrackedVector<double>(static_cast<std::size_t>(n)));
}

void check_shape(const Shape& shape) {
  for (auto e : shape)
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
}

}  // namespace

std::size_t MemoryStats::current_bytes() { return g_current_bytes.load(); }
std::size_t MemoryStats::peak_bytes() { return g_peak_bytes.load(); }
void MemoryStats::reset_peak() { g_peak_bytes.store(g_current_bytes.load()); }
void MemoryStats::on_allocate(std::size_t bytes) {
  auto now = g_current_bytes.fetch_add(bytes) + bytes;
  auto peak = g_peak_bytes.load();
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}
void MemoryStats::on_release(std::size_t bytes) { g_current_bytes.fetch_sub(bytes); }

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* dtype_name(DType dtype) { return dtype == DType::kFloat32 ? "f32" : "f64"; }
std::size_t dtype_size(DType dtype) { return dtype == DType::kFloat32 ? 4 : 8; }

std::vector<std::int64_t> strides_of(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * shape[i + 1];
  return s;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_mode_enabled() { return t_grad_enabled; }

Tensor Tensor::empty(Shape shape, DType dtype) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->storage = make_storage(dtype, numel_of(shape));
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return empty(std::move(shape), dtype); }

Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = empty(std::move(shape), dtype);
  dispatch(dtype, [&]<typename T>() {
    auto d = t.mutable_data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values, DType dtype) {
  if (numel_of(shape) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("from_vector: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  Tensor t = empty(std::move(shape), dtype);
  dispatch(dtype, [&]<typename T>() {
    auto d = t.mutable_data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::meta(Shape shape, DType dtype) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  return Tensor(std::move(impl));
}

void Tensor::check_defined() const {
  if (!impl_) throw std::logic_error("operation on an undefined tensor");
}

bool Tensor::is_meta() const {
  check_defined();
  return impl_->storage == nullptr;
}

const Shape& Tensor::shape() const {
  check_defined();
  return impl_->shape;
}

std::int64_t Tensor::dim() const { return static_cast<std::int64_t>(shape().size()); }

std::int64_t Tensor::size(std::int64_t axis) const {
  auto d = dim();
  if (axis < 0) axis += d;
  if (axis < 0 || axis >= d)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::int64_t Tensor::numel() const { return numel_of(shape()); }

DType Tensor::dtype() const {
  check_defined();
  return impl_->dtype;
}

template <typename T>
std::span<const T> Tensor::data() const {
  check_defined();
  if (!impl_->storage) throw std::logic_error("meta tensor has no data");
  if (impl_->dtype != dtype_of<T>())
    throw std::logic_error(std::string("data<") + dtype_name(dtype_of<T>()) + "> on " +
                           dtype_name(impl_->dtype) + " tensor");
  const auto& v = std::get<TrackedVector<T>>(*impl_->storage);
  return {v.data(), v.size()};
}

template <typename T>
std::span<T> Tensor::mutable_data() {
  check_defined();
  if (!impl_->storage) throw std::logic_error("meta tensor has no data");
  if (impl_->dtype != dtype_of<T>())
    throw std::logic_error(std::string("mutable_data<") + dtype_name(dtype_of<T>()) + "> on " +
                           dtype_name(impl_->dtype) + " tensor");
  auto& v = std::get<TrackedVector<T>>(*impl_->storage);
  return {v.data(), v.size()};
}

template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;
template std::span<float> Tensor::mutable_data<float>();
template std::span<double> Tensor::mutable_data<double>();

double Tensor::at(std::int64_t flat_index) const {
  return dispatch(dtype(), [&]<typename T>() -> double {
    auto d = data<T>();
    if (flat_index < 0 || flat_index >= static_cast<std::int64_t>(d.size()))
      throw std::out_of_range("flat index out of range");
    return static_cast<double>(d[flat_index]);
  });
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&]<typename T>() {
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

bool Tensor::requires_grad() const {
  check_defined();
  return impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool value) {
  check_defined();
  if (impl_->grad_fn) throw std::logic_error("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const {
  check_defined();
  return impl_->grad_fn == nullptr;
}

Tensor Tensor::grad() const {
  check_defined();
  return impl_->grad ? Tensor(impl_->grad) : Tensor();
}

void Tensor::zero_grad() {
  check_defined();
  impl_->grad.reset();
}

void Tensor::set_grad(const Tensor& g) {
  check_defined();
  if (g.defined() && g.shape() != shape())
    throw ShapeError("gradient shape " + shape_str(g.shape()) + " != " + shape_str(shape()));
  impl_->grad = g.defined() ? g.impl() : nullptr;
}

Tensor Tensor::detach() const {
  check_defined();
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->storage = impl_->storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  check_defined();
  if (is_meta()) return meta(shape(), dtype());
  Tensor t = empty(shape(), dtype());
  *t.impl_->storage = *impl_->storage;
  return t;
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return detach();
  Tensor out = empty(shape(), target);
  dispatch(dtype(), [&]<typename S>() {
    dispatch(target, [&]<typename D>() {
      auto src = data<S>();
      auto dst = out.mutable_data<D>();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
  return out;
}

}  // namespace ascan
