#pragma once

#include <cmath>

#include "eevg/numerics/rng.hpp"
#include "eevg/numerics/tensor.hpp"

namespace eevg {

// U(−a, a) with a = sqrt(6 / (fan_in + fan_out)); fan_in = rows, fan_out = cols.
template <typename T>
Tensor<T> xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor<T> t({rows, cols});
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (T& v : t.data()) {
    v = static_cast<T>(rng.uniform(-a, a));
  }
  return t;
}

}  // namespace eevg
