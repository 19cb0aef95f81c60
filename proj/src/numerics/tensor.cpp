#include "eevg/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace eevg {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) {
      s += "x";
    }
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) {
    throw DimensionError("tensor shape must have rank >= 1");
  }
  for (std::size_t e : shape) {
    if (e == 0) {
      throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
  return Tensor({rows, cols}, std::vector<T>(values));
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (rank() == 1) {
    return 1;
  }
  if (rank() != 2) {
    throw DimensionError("rows() on rank-" + std::to_string(rank()) + " tensor");
  }
  return shape_[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (rank() == 1) {
    return shape_[0];
  }
  if (rank() != 2) {
    throw DimensionError("cols() on rank-" + std::to_string(rank()) + " tensor");
  }
  return shape_[1];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    grad_.assign(data_.size(), T{0});
  } else {
    grad_.clear();
  }
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T{0});
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

template class Tensor<float>;
template class Tensor<double>;
template bool bitwise_equal(const Tensor<float>&, const Tensor<float>&);
template bool bitwise_equal(const Tensor<double>&, const Tensor<double>&);

}  // namespace eevg
