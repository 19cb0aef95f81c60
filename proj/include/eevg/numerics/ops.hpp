#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eevg/numerics/tape.hpp"

/// Differentiable primitives. Every function records its output on the tape
/// of its operands together with a backward closure, and throws
/// DimensionError on incompatible shapes (message names both shapes).
namespace eevg::ops {

// ---- linear algebra -------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);
// a · bᵀ
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
// x · w + bias, bias is 1×out and broadcasts over rows.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);
template <typename T>
Var<T> transpose(const Var<T>& a);

// ---- elementwise ----------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b);
// Elementwise min/max. At ties the gradient goes to the first operand.
template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> maximum(const Var<T>& a, const Var<T>& b);
// Adds a 1×cols row to every row of x.
template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& row);
template <typename T>
Var<T> scale(const Var<T>& a, T s);
template <typename T>
Var<T> add_scalar(const Var<T>& a, T s);
template <typename T>
Var<T> relu(const Var<T>& a);
template <typename T>
Var<T> exp(const Var<T>& a);
template <typename T>
Var<T> log(const Var<T>& a);
template <typename T>
Var<T> sigmoid(const Var<T>& a);
// Exact (erf) GELU.
template <typename T>
Var<T> gelu(const Var<T>& a);
// Huber with unit transition: 0.5·x² for |x| < 1, |x| − 0.5 otherwise.
template <typename T>
Var<T> smooth_l1(const Var<T>& a);

// ---- reductions -----------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);

// ---- normalization --------------------------------------------------------

// Row softmax with max subtraction. If `column_mask` is non-empty it has one
// entry per column; zero entries are excluded (probability exactly 0). A row
// with every column masked is a PreconditionError.
template <typename T>
Var<T> softmax_rows(const Var<T>& x, std::span<const std::uint8_t> column_mask = {});

// Per-row normalization, then gamma ⊙ x̂ + beta. gamma and beta are 1×C.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

// ---- spatial --------------------------------------------------------------

// Single-channel cross-correlation with an odd s×s kernel, zero padding
// (s−1)/2 so the output keeps the input extent, plus a 1×1 bias.
template <typename T>
Var<T> conv2d_1ch(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias);

// ---- indexing -------------------------------------------------------------

template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t count);
template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t count);
template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);
// out[j] = x[indices[j]]. Indices may repeat (embedding lookup); the backward
// pass scatter-adds.
template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> indices);
// out has `total_rows` rows; out[indices[j]] = x[j], every other row is zero.
// Indices must be distinct.
template <typename T>
Var<T> scatter_rows(const Var<T>& x, std::span<const std::size_t> indices, std::size_t total_rows);
// Rearranges an (grid_rows·grid_cols)×(patch²) row-per-patch matrix into a
// (grid_rows·patch)×(grid_cols·patch) image. Patch i lands at tile row
// i / grid_cols, tile column i % grid_cols; each row is a row-major tile.
template <typename T>
Var<T> patches_to_image(const Var<T>& x, std::size_t grid_rows, std::size_t grid_cols, std::size_t patch);

}  // namespace eevg::ops
