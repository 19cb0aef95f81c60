#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "eevg/numerics/tensor.hpp"

namespace eevg {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// owning tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }

  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  bool needs_grad() const;

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Linear record of a forward computation.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for the backward sweep. Each primitive registers
/// its own backward closure; closures read the upstream gradient of their
/// node and accumulate into the gradients of their inputs. Parameter leaves
/// reference an external Tensor and, after backward(), their gradient is
/// added into that tensor's grad slot.
///
/// A tape constructed with recording disabled stores values only; it is the
/// forward-only mode used for inference and benchmarks.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<T> constant(Tensor<T> value);
  // References `param`, which must outlive the tape. If the tape records and
  // param.requires_grad() is set, backward() accumulates into its grad slot;
  // accumulation is the only write and never touches the values.
  Var<T> parameter(const Tensor<T>& param);

  // Append the output of a primitive. `backward` is kept only if the tape is
  // recording and at least one input needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, Backward backward);

  const Tensor<T>& value(std::uint32_t id) const;
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  // Gradient buffer of a node, allocated (zeroed) on first access.
  std::span<T> grad(std::uint32_t id);
  bool has_grad(std::uint32_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(root)/d(root) = 1 for a single-element root and sweeps backward.
  void backward(const Var<T>& root);

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T>* param = nullptr;
    std::vector<T> grad;
    Backward backward;
    bool needs_grad = false;
  };

  // deque: references to node values stay valid while the tape grows.
  std::deque<Node> nodes_;
  bool recording_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::needs_grad() const {
  return tape_->needs_grad(id_);
}

}  // namespace eevg
