#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eevg/numerics/tensor.hpp"

namespace eevg {

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// First/second moment accumulators for a fixed, ordered parameter list.
template <typename T>
struct OptimState {
  AdamWHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  explicit OptimState(AdamWHyper h = {}) : hyper(h) {}
};

// One decoupled-weight-decay Adam update using each parameter's grad slot.
// The moment buffers are sized on the first call; later calls with a
// different parameter list throw DimensionError.
template <typename T>
void adamw_step(std::span<Tensor<T>* const> params, OptimState<T>& state);

}  // namespace eevg
