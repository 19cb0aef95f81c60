#include "eevg/numerics/tape.hpp"

#include <algorithm>

namespace eevg {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::parameter(const Tensor<T>& param) {
  Node node;
  node.external = &param;
  if (recording_ && param.requires_grad()) {
    node.param = const_cast<Tensor<T>*>(&param);
    node.needs_grad = true;
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> inputs, Backward backward) {
  Node node;
  node.owned = std::move(value);
  if (recording_) {
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(), [this](const Var<T>& v) {
      if (v.tape_ != this) {
        throw PreconditionError("operands recorded on different tapes");
      }
      return nodes_[v.id()].needs_grad;
    });
    if (node.needs_grad) {
      node.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.owned;
}

template <typename T>
std::span<T> Tape<T>::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    n.grad.assign(value(id).size(), T{0});
  }
  return n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& root) {
  if (!recording_) {
    throw PreconditionError("backward() on a tape that is not recording");
  }
  if (root.tape_ != this || root.size() != 1) {
    throw DimensionError("backward() root must be a single element on this tape, got " + shape_string(root.shape()));
  }
  grad(root.id())[0] = T{1};
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) {
      continue;
    }
    if (n.backward) {
      n.backward(*this, static_cast<std::uint32_t>(i));
    }
    if (n.param != nullptr) {
      auto dst = n.param->grad();
      for (std::size_t j = 0; j < dst.size(); ++j) {
        dst[j] += n.grad[j];
      }
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace eevg
