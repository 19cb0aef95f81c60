#pragma once

#include <cstddef>

// Raw single-threaded dense kernels over row-major buffers. No shape checks;
// callers validate extents.
namespace eevg::kernels {

// c[m×n] (+)= a[m×k] · b[k×n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// c[m×n] (+)= a[m×k] · b[n×k]ᵀ
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// c[m×n] (+)= a[k×m]ᵀ · b[k×n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst);

}  // namespace eevg::kernels
