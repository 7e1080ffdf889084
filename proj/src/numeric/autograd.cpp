#include "ascan/autograd.hpp"

#include <unordered_map>
#include <unordered_set>

#include "ascan/ops.hpp"

namespace ascan {

namespace detail {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

Tensor record(Tensor output, const char* name, std::vector<Tensor> inputs, BackwardFn backward) {
  if (!grad_mode_enabled()) return output;
  bool needed = false;
  for (const auto& in : inputs)
    if (in.defined() && in.requires_grad()) needed = true;
  if (!needed) return output;
  auto node = std::make_shared<Node>();
  node->name = name;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  output.impl()->grad_fn = std::move(node);
  output.impl()->requires_grad = true;
  return output;
}

}  // namespace detail

namespace {

void accumulate_leaf(const Tensor& leaf, const Tensor& g) {
  Tensor current = leaf.grad();
  Tensor next = current.defined() ? add(current, g) : g.clone();
  const_cast<Tensor&>(leaf).set_grad(next);
}

}  // namespace

void Tensor::backward() const {
  check_defined();
  if (numel() != 1)
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  if (!requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");

  NoGradGuard no_grad;

  // Post-order DFS gives a topological order of interior nodes.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node_impl, next_child] = stack.back();
    const auto& fn = node_impl->grad_fn;
    if (fn && next_child < fn->inputs.size()) {
      const Tensor& child = fn->inputs[next_child++];
      if (child.defined() && child.requires_grad() && child.impl()->grad_fn &&
          visited.insert(child.impl().get()).second)
        stack.emplace_back(child.impl().get(), 0);
      continue;
    }
    order.push_back(node_impl);
    stack.pop_back();
  }

  std::unordered_map<detail::TensorImpl*, Tensor> pending;
  pending[impl_.get()] = Tensor::ones(shape(), dtype());

  if (!impl_->grad_fn) {
    accumulate_leaf(*this, pending[impl_.get()]);
    return;
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node_impl = *it;
    auto found = pending.find(node_impl);
    if (found == pending.end()) continue;
    Tensor grad_out = std::move(found->second);
    pending.erase(found);
    const auto& fn = node_impl->grad_fn;
    std::vector<Tensor> grads = fn->backward(grad_out);
    for (std::size_t i = 0; i < fn->inputs.size() && i < grads.size(); ++i) {
      const Tensor& input = fn->inputs[i];
      const Tensor& g = grads[i];
      if (!g.defined() || !input.defined() || !input.requires_grad()) continue;
      if (g.shape() != input.shape())
        throw std::logic_error(std::string("gradient shape mismatch in ") + fn->name + ": " +
                               shape_str(g.shape()) + " vs " + shape_str(input.shape()));
      if (input.impl()->grad_fn) {
        auto slot = pending.find(input.impl().get());
        if (slot == pending.end())
          pending.emplace(input.impl().get(), g);
        else
          slot->second = add(slot->second, g);
      } else {
        accumulate_leaf(input, g);
      }
    }
  }
}

}  // namespace ascan
