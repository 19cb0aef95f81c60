#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "eevg/numerics/tape.hpp"

namespace eevg {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Location and values of the worst coordinate.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

enum class FdScheme {
  central,     // (f(θ+h) − f(θ−h)) / 2h
  richardson,  // (4·D(h/2) − D(h)) / 3 over the central quotient D; O(h⁴)
};

// Builds a scalar on the given tape. Parameters must enter through
// tape.parameter() so that gradients reach their grad slots.
using ScalarFn = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients with central differences
/// (f(θ+h) − f(θ−h)) / 2h, coordinate by coordinate, and returns the worst
/// relative error |a − n| / max(|a|, |n|, 1e-8). Every parameter must have
/// requires_grad set. `stride` > 1 probes every stride-th coordinate of each
/// parameter. Throws NumericError if f is non-finite at a probe point.
///
/// Coordinates whose true gradient is exactly zero (a key bias under softmax,
/// say) read back pure roundoff, about ulp(f)/h. The Richardson scheme allows
/// h around 1e-2, which keeps that well under the 1e-8 floor.
GradCheckReport gradient_check(const ScalarFn& f, std::span<Tensor<double>* const> params, double h = 1e-6,
                               std::size_t stride = 1, FdScheme scheme = FdScheme::central);

}  // namespace eevg
