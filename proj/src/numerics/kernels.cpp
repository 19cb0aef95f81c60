#include "eevg/numerics/kernels.hpp"

#include <Eigen/Core>

namespace eevg::kernels {

namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using In = Eigen::Map<const RowMajor<T>>;
template <typename T>
using Out = Eigen::Map<RowMajor<T>>;

template <typename T, typename Product>
void store(Out<T> c, const Product& p, bool accumulate) {
  if (accumulate) {
    c.noalias() += p;
  } else {
    c.noalias() = p;
  }
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
  store<T>(Out<T>(c, M, N), In<T>(a, M, K) * In<T>(b, K, N), accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
  store<T>(Out<T>(c, M, N), In<T>(a, M, K) * In<T>(b, N, K).transpose(), accumulate);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
  store<T>(Out<T>(c, M, N), In<T>(a, K, M).transpose() * In<T>(b, K, N), accumulate);
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  const auto R = static_cast<Eigen::Index>(rows), C = static_cast<Eigen::Index>(cols);
  Out<T>(dst, C, R) = In<T>(src, R, C).transpose();
}

#define EEVG_INSTANTIATE(T)                                                                            \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void transpose<T>(std::size_t, std::size_t, const T*, T*);

EEVG_INSTANTIATE(float)
EEVG_INSTANTIATE(double)

#undef EEVG_INSTANTIATE

}  // namespace eevg::kernels
