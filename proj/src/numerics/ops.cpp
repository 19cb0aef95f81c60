#include "eevg/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "eevg/numerics/kernels.hpp"

namespace eevg::ops {

namespace {

template <typename T>
std::size_t rows_of(const Var<T>& v) {
  return v.value().rows();
}

template <typename T>
std::size_t cols_of(const Var<T>& v) {
  return v.value().cols();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

template <typename T>
void require_matrix(const char* op, const Var<T>& v) {
  if (v.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(v.shape()));
  }
}

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, a.shape(), b.shape());
  }
}

// Elementwise unary op: forward f(x), local derivative df(x, y).
template <typename T, typename F, typename DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = f(x[i]);
  }
  const std::uint32_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, df](Tape<T>& tape, std::uint32_t self) {
    const auto& xv = tape.value(ia);
    const auto& yv = tape.value(self);
    auto g = tape.grad(self);
    auto ga = tape.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * df(xv[i], yv[i]);
    }
  });
}

// Elementwise binary op on equal shapes: forward f(a, b), partials da(a, b),
// db(a, b).
template <typename T, typename F, typename DA, typename DB>
Var<T> binary(const char* name, const Var<T>& a, const Var<T>& b, F f, DA da, DB db) {
  require_same_shape(name, a, b);
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = f(x[i], y[i]);
  }
  const std::uint32_t ia = a.id();
  const std::uint32_t ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, da, db](Tape<T>& tape, std::uint32_t self) {
    const auto& xv = tape.value(ia);
    const auto& yv = tape.value(ib);
    const std::vector<T> g(tape.grad(self).begin(), tape.grad(self).end());
    if (tape.needs_grad(ia)) {
      auto ga = tape.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * da(xv[i], yv[i]);
      }
    }
    if (tape.needs_grad(ib)) {
      auto gb = tape.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[i] += g[i] * db(xv[i], yv[i]);
      }
    }
  });
}

}  // namespace

// ---- linear algebra -------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = rows_of(a);
  const std::size_t k = cols_of(a);
  const std::size_t n = cols_of(b);
  if (rows_of(b) != k) {
    shape_error("matmul", a.shape(), b.shape());
  }
  Tensor<T> out({m, n});
  kernels::gemm_nn(m, n, k, a.value().data().data(), b.value().data().data(), out.data().data(), false);
  const std::uint32_t ia = a.id();
  const std::uint32_t ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, n, k](Tape<T>& tape, std::uint32_t self) {
    const T* g = tape.grad(self).data();
    if (tape.needs_grad(ia)) {
      kernels::gemm_nt(m, k, n, g, tape.value(ib).data().data(), tape.grad(ia).data(), true);
    }
    if (tape.needs_grad(ib)) {
      kernels::gemm_tn(k, n, m, tape.value(ia).data().data(), g, tape.grad(ib).data(), true);
    }
  });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  require_matrix("matmul_nt", a);
  require_matrix("matmul_nt", b);
  const std::size_t m = rows_of(a);
  const std::size_t k = cols_of(a);
  const std::size_t n = rows_of(b);
  if (cols_of(b) != k) {
    shape_error("matmul_nt", a.shape(), b.shape());
  }
  Tensor<T> out({m, n});
  kernels::gemm_nt(m, n, k, a.value().data().data(), b.value().data().data(), out.data().data(), false);
  const std::uint32_t ia = a.id();
  const std::uint32_t ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, n, k](Tape<T>& tape, std::uint32_t self) {
    const T* g = tape.grad(self).data();
    if (tape.needs_grad(ia)) {
      kernels::gemm_nn(m, k, n, g, tape.value(ib).data().data(), tape.grad(ia).data(), true);
    }
    if (tape.needs_grad(ib)) {
      kernels::gemm_tn(n, k, m, g, tape.value(ia).data().data(), tape.grad(ib).data(), true);
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  require_matrix("linear", x);
  require_matrix("linear", w);
  const std::size_t m = rows_of(x);
  const std::size_t k = cols_of(x);
  const std::size_t n = cols_of(w);
  if (rows_of(w) != k) {
    shape_error("linear", x.shape(), w.shape());
  }
  if (bias.size() != n || rows_of(bias) != 1) {
    shape_error("linear (bias)", w.shape(), bias.shape());
  }
  Tensor<T> out({m, n});
  const T* bv = bias.value().data().data();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(bv, bv + n, out.data().data() + i * n);
  }
  kernels::gemm_nn(m, n, k, x.value().data().data(), w.value().data().data(), out.data().data(), true);
  const std::uint32_t ix = x.id();
  const std::uint32_t iw = w.id();
  const std::uint32_t ib = bias.id();
  return x.tape().record(std::move(out), {x, w, bias}, [ix, iw, ib, m, n, k](Tape<T>& tape, std::uint32_t self) {
    const T* g = tape.grad(self).data();
    if (tape.needs_grad(ix)) {
      kernels::gemm_nt(m, k, n, g, tape.value(iw).data().data(), tape.grad(ix).data(), true);
    }
    if (tape.needs_grad(iw)) {
      kernels::gemm_tn(k, n, m, tape.value(ix).data().data(), g, tape.grad(iw).data(), true);
    }
    if (tape.needs_grad(ib)) {
      T* gb = tape.grad(ib).data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          gb[j] += g[i * n + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  require_matrix("transpose", a);
  const std::size_t r = rows_of(a);
  const std::size_t c = cols_of(a);
  Tensor<T> out({c, r});
  kernels::transpose(r, c, a.value().data().data(), out.data().data());
  const std::uint32_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, r, c](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    auto ga = tape.grad(ia);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        ga[i * c + j] += g[j * r + i];
      }
    }
  });
}

// ---- elementwise ----------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; }, [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T{1} / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  return binary(
      "minimum", a, b, [](T x, T y) { return x <= y ? x : y; }, [](T x, T y) { return x <= y ? T{1} : T{0}; },
      [](T x, T y) { return x <= y ? T{0} : T{1}; });
}

template <typename T>
Var<T> maximum(const Var<T>& a, const Var<T>& b) {
  return binary(
      "maximum", a, b, [](T x, T y) { return x >= y ? x : y; }, [](T x, T y) { return x >= y ? T{1} : T{0}; },
      [](T x, T y) { return x >= y ? T{0} : T{1}; });
}

template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& row) {
  require_matrix("add_row", x);
  const std::size_t m = rows_of(x);
  const std::size_t n = cols_of(x);
  if (row.size() != n || rows_of(row) != 1) {
    shape_error("add_row", x.shape(), row.shape());
  }
  Tensor<T> out = x.value();
  out.set_requires_grad(false);
  const auto& rv = row.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] += rv[j];
    }
  }
  const std::uint32_t ix = x.id();
  const std::uint32_t ir = row.id();
  return x.tape().record(std::move(out), {x, row}, [ix, ir, m, n](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    if (tape.needs_grad(ix)) {
      auto gx = tape.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i];
      }
    }
    if (tape.needs_grad(ir)) {
      auto gr = tape.grad(ir);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          gr[j] += g[i * n + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary(a, [](T x) { return x > T{0} ? x : T{0}; }, [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary(
      a,
      [](T x) {
        if (x >= T{0}) {
          return T{1} / (T{1} + std::exp(-x));
        }
        const T e = std::exp(x);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
  constexpr T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  constexpr T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return unary(
      a, [](T x) { return T{0.5} * x * (T{1} + std::erf(x * inv_sqrt2)); },
      [](T x, T) { return T{0.5} * (T{1} + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(T{-0.5} * x * x); });
}

template <typename T>
Var<T> smooth_l1(const Var<T>& a) {
  return unary(
      a, [](T x) { return std::abs(x) < T{1} ? T{0.5} * x * x : std::abs(x) - T{0.5}; },
      [](T x, T) { return std::abs(x) < T{1} ? x : (x > T{0} ? T{1} : T{-1}); });
}

// ---- reductions -----------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total{0};
  for (T v : a.value().data()) {
    total += v;
  }
  const std::uint32_t ia = a.id();
  return a.tape().record(Tensor<T>({1, 1}, total), {a}, [ia](Tape<T>& tape, std::uint32_t self) {
    const T g = tape.grad(self)[0];
    for (T& v : tape.grad(ia)) {
      v += g;
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.size()));
}

// ---- normalization --------------------------------------------------------

template <typename T>
Var<T> softmax_rows(const Var<T>& x, std::span<const std::uint8_t> column_mask) {
  require_matrix("softmax_rows", x);
  const std::size_t m = rows_of(x);
  const std::size_t n = cols_of(x);
  if (!column_mask.empty() && column_mask.size() != n) {
    throw DimensionError("softmax_rows: mask length " + std::to_string(column_mask.size()) + " vs shape " +
                         shape_string(x.shape()));
  }
  if (!column_mask.empty() && std::none_of(column_mask.begin(), column_mask.end(), [](std::uint8_t v) { return v; })) {
    throw PreconditionError("softmax_rows: every column is masked");
  }
  const auto keep = [&](std::size_t j) { return column_mask.empty() || column_mask[j] != 0; };
  const auto& xv = x.value();
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data().data() + i * n;
    T* o = out.data().data() + i * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (keep(j)) {
        mx = std::max(mx, row[j]);
      }
    }
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = keep(j) ? std::exp(row[j] - mx) : T{0};
      total += o[j];
    }
    const T inv = T{1} / total;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] *= inv;
    }
  }
  const std::uint32_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, m, n](Tape<T>& tape, std::uint32_t self) {
    const auto& y = tape.value(self);
    auto g = tape.grad(self);
    auto gx = tape.grad(ix);
    for (std::size_t i = 0; i < m; ++i) {
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) {
        dot += g[i * n + j] * y[i * n + j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require_matrix("layer_norm", x);
  if (!(eps > T{0})) {
    throw ConfigError("layer_norm: eps must be positive");
  }
  const std::size_t m = rows_of(x);
  const std::size_t c = cols_of(x);
  if (gamma.size() != c || beta.size() != c) {
    shape_error("layer_norm", x.shape(), gamma.shape());
  }
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> out({m, c});
  std::vector<T> xhat(m * c);
  std::vector<T> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data().data() + i * c;
    T mu{0};
    for (std::size_t j = 0; j < c; ++j) {
      mu += row[j];
    }
    mu /= static_cast<T>(c);
    T var{0};
    for (std::size_t j = 0; j < c; ++j) {
      var += (row[j] - mu) * (row[j] - mu);
    }
    var /= static_cast<T>(c);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * inv_std[i];
      out[i * c + j] = gv[j] * xhat[i * c + j] + bv[j];
    }
  }
  const std::uint32_t ix = x.id();
  const std::uint32_t ig = gamma.id();
  const std::uint32_t ib = beta.id();
  Tape<T>& tape = x.tape();
  if (!tape.recording()) {
    return tape.record(std::move(out), {x, gamma, beta}, {});
  }
  return tape.record(std::move(out), {x, gamma, beta},
                     [ix, ig, ib, m, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tape,
                                                                                              std::uint32_t self) {
                       auto g = tape.grad(self);
                       const auto& gv = tape.value(ig);
                       if (tape.needs_grad(ix)) {
                         auto gx = tape.grad(ix);
                         std::vector<T> gxhat(c);
                         for (std::size_t i = 0; i < m; ++i) {
                           T mean_g{0};
                           T mean_gx{0};
                           for (std::size_t j = 0; j < c; ++j) {
                             gxhat[j] = g[i * c + j] * gv[j];
                             mean_g += gxhat[j];
                             mean_gx += gxhat[j] * xhat[i * c + j];
                           }
                           mean_g /= static_cast<T>(c);
                           mean_gx /= static_cast<T>(c);
                           for (std::size_t j = 0; j < c; ++j) {
                             gx[i * c + j] += inv_std[i] * (gxhat[j] - mean_g - xhat[i * c + j] * mean_gx);
                           }
                         }
                       }
                       if (tape.needs_grad(ig)) {
                         auto gg = tape.grad(ig);
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < c; ++j) {
                             gg[j] += g[i * c + j] * xhat[i * c + j];
                           }
                         }
                       }
                       if (tape.needs_grad(ib)) {
                         auto gb = tape.grad(ib);
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < c; ++j) {
                             gb[j] += g[i * c + j];
                           }
                         }
                       }
                     });
}

// ---- spatial --------------------------------------------------------------

template <typename T>
Var<T> conv2d_1ch(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias) {
  require_matrix("conv2d_1ch", x);
  require_matrix("conv2d_1ch", kernel);
  const std::size_t s = rows_of(kernel);
  if (cols_of(kernel) != s) {
    throw DimensionError("conv2d_1ch: kernel must be square, got " + shape_string(kernel.shape()));
  }
  if (s % 2 == 0) {
    throw ConfigError("conv2d_1ch: kernel extent must be odd, got " + std::to_string(s));
  }
  if (bias.size() != 1) {
    throw DimensionError("conv2d_1ch: bias must be a single scalar, got " + shape_string(bias.shape()));
  }
  const std::size_t h = rows_of(x);
  const std::size_t w = cols_of(x);
  const auto r = static_cast<std::ptrdiff_t>(s / 2);
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  Tensor<T> out({h, w}, bias.value()[0]);
  // Iterate kernel taps outermost so the inner loop is a contiguous row axpy.
  for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(s); ++u) {
    for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(s); ++v) {
      const T kval = kv[static_cast<std::size_t>(u) * s + static_cast<std::size_t>(v)];
      const std::ptrdiff_t du = u - r;
      const std::ptrdiff_t dv = v - r;
      const std::size_t j0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dv));
      const std::size_t j1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w),
                                                                               static_cast<std::ptrdiff_t>(w) - dv));
      for (std::size_t i = 0; i < h; ++i) {
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + du;
        if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) {
          continue;
        }
        const T* src = xv.data().data() + static_cast<std::size_t>(si) * w;
        T* dst = out.data().data() + i * w;
        for (std::size_t j = j0; j < j1; ++j) {
          dst[j] += kval * src[static_cast<std::ptrdiff_t>(j) + dv];
        }
      }
    }
  }
  const std::uint32_t ix = x.id();
  const std::uint32_t ik = kernel.id();
  const std::uint32_t ib = bias.id();
  return x.tape().record(std::move(out), {x, kernel, bias}, [ix, ik, ib, h, w, s, r](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    const auto& xv = tape.value(ix);
    const auto& kv = tape.value(ik);
    const bool want_x = tape.needs_grad(ix);
    const bool want_k = tape.needs_grad(ik);
    std::span<T> gx;
    std::span<T> gk;
    if (want_x) {
      gx = tape.grad(ix);
    }
    if (want_k) {
      gk = tape.grad(ik);
    }
    for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(s); ++u) {
      for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(s); ++v) {
        const std::size_t tap = static_cast<std::size_t>(u) * s + static_cast<std::size_t>(v);
        const T kval = kv[tap];
        const std::ptrdiff_t du = u - r;
        const std::ptrdiff_t dv = v - r;
        const std::size_t j0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dv));
        const std::size_t j1 = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w), static_cast<std::ptrdiff_t>(w) - dv));
        T acc{0};
        for (std::size_t i = 0; i < h; ++i) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + du;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) {
            continue;
          }
          const std::size_t src_off = static_cast<std::size_t>(si) * w;
          for (std::size_t j = j0; j < j1; ++j) {
            const std::size_t sj = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(j) + dv);
            const T gv = g[i * w + j];
            if (want_x) {
              gx[src_off + sj] += kval * gv;
            }
            acc += gv * xv[src_off + sj];
          }
        }
        if (want_k) {
          gk[tap] += acc;
        }
      }
    }
    if (tape.needs_grad(ib)) {
      T total{0};
      for (T v : g) {
        total += v;
      }
      tape.grad(ib)[0] += total;
    }
  });
}

// ---- indexing -------------------------------------------------------------

template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t count) {
  require_matrix("slice_rows", x);
  const std::size_t m = rows_of(x);
  const std::size_t n = cols_of(x);
  if (count == 0 || begin + count > m) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(x.shape()));
  }
  const auto& xv = x.value();
  Tensor<T> out({count, n}, std::vector<T>(xv.data().begin() + begin * n, xv.data().begin() + (begin + count) * n));
  const std::uint32_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, begin, n](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    auto gx = tape.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[begin * n + i] += g[i];
    }
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t count) {
  require_matrix("slice_cols", x);
  const std::size_t m = rows_of(x);
  const std::size_t n = cols_of(x);
  if (count == 0 || begin + count > n) {
    throw IndexError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(x.shape()));
  }
  const auto& xv = x.value();
  Tensor<T> out({m, count});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(xv.data().data() + i * n + begin, count, out.data().data() + i * count);
  }
  const std::uint32_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, begin, count, m, n](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    auto gx = tape.grad(ix);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < count; ++j) {
        gx[i * n + begin + j] += g[i * count + j];
      }
    }
  });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) {
    throw DimensionError("concat_rows: no operands");
  }
  const std::size_t n = cols_of(parts[0]);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix("concat_rows", p);
    if (cols_of(p) != n) {
      shape_error("concat_rows", parts[0].shape(), p.shape());
    }
    total += rows_of(p);
  }
  Tensor<T> out({total, n});
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.size();
  }
  return parts[0].tape().record(std::move(out), parts, [ids, offsets](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tape.needs_grad(ids[k])) {
        continue;
      }
      auto gp = tape.grad(ids[k]);
      for (std::size_t i = 0; i < gp.size(); ++i) {
        gp[i] += g[offsets[k] + i];
      }
    }
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) {
    throw DimensionError("concat_cols: no operands");
  }
  const std::size_t m = rows_of(parts[0]);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p);
    if (rows_of(p) != m) {
      shape_error("concat_cols", parts[0].shape(), p.shape());
    }
    total += cols_of(p);
  }
  Tensor<T> out({m, total});
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> col_offsets;
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = cols_of(p);
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.value().data().data() + i * w, w, out.data().data() + i * total + off);
    }
    ids.push_back(p.id());
    col_offsets.push_back(off);
    widths.push_back(w);
    off += w;
  }
  return parts[0].tape().record(std::move(out), parts,
                                [ids, col_offsets, widths, m, total](Tape<T>& tape, std::uint32_t self) {
                                  auto g = tape.grad(self);
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (!tape.needs_grad(ids[k])) {
                                      continue;
                                    }
                                    auto gp = tape.grad(ids[k]);
                                    const std::size_t w = widths[k];
                                    for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t j = 0; j < w; ++j) {
                                        gp[i * w + j] += g[i * total + col_offsets[k] + j];
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> indices) {
  require_matrix("gather_rows", x);
  const std::size_t m = rows_of(x);
  const std::size_t n = cols_of(x);
  if (indices.empty()) {
    throw DimensionError("gather_rows: empty index list");
  }
  const auto& xv = x.value();
  Tensor<T> out({indices.size(), n});
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= m) {
      throw IndexError("gather_rows: index " + std::to_string(indices[j]) + " out of range for " +
                       shape_string(x.shape()));
    }
    std::copy_n(xv.data().data() + indices[j] * n, n, out.data().data() + j * n);
  }
  const std::uint32_t ix = x.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return x.tape().record(std::move(out), {x}, [ix, n, idx = std::move(idx)](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    auto gx = tape.grad(ix);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      for (std::size_t c = 0; c < n; ++c) {
        gx[idx[j] * n + c] += g[j * n + c];
      }
    }
  });
}

template <typename T>
Var<T> scatter_rows(const Var<T>& x, std::span<const std::size_t> indices, std::size_t total_rows) {
  require_matrix("scatter_rows", x);
  const std::size_t n = cols_of(x);
  if (indices.size() != rows_of(x)) {
    throw DimensionError("scatter_rows: " + std::to_string(indices.size()) + " indices for " +
                         shape_string(x.shape()));
  }
  std::vector<std::uint8_t> seen(total_rows, 0);
  const auto& xv = x.value();
  Tensor<T> out({total_rows, n});
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= total_rows) {
      throw IndexError("scatter_rows: index " + std::to_string(indices[j]) + " out of range for " +
                       std::to_string(total_rows) + " rows");
    }
    if (seen[indices[j]] != 0) {
      throw IndexError("scatter_rows: duplicate index " + std::to_string(indices[j]));
    }
    seen[indices[j]] = 1;
    std::copy_n(xv.data().data() + j * n, n, out.data().data() + indices[j] * n);
  }
  const std::uint32_t ix = x.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return x.tape().record(std::move(out), {x}, [ix, n, idx = std::move(idx)](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    auto gx = tape.grad(ix);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      for (std::size_t c = 0; c < n; ++c) {
        gx[j * n + c] += g[idx[j] * n + c];
      }
    }
  });
}

template <typename T>
Var<T> patches_to_image(const Var<T>& x, std::size_t grid_rows, std::size_t grid_cols, std::size_t patch) {
  require_matrix("patches_to_image", x);
  if (rows_of(x) != grid_rows * grid_cols || cols_of(x) != patch * patch) {
    throw DimensionError("patches_to_image: " + shape_string(x.shape()) + " is not " +
                         std::to_string(grid_rows * grid_cols) + "x" + std::to_string(patch * patch));
  }
  const std::size_t width = grid_cols * patch;
  // pixel_of[i * P² + q] is the flat image offset of tile element q of patch i.
  std::vector<std::size_t> pixel_of(x.size());
  for (std::size_t i = 0; i < grid_rows * grid_cols; ++i) {
    const std::size_t r0 = (i / grid_cols) * patch;
    const std::size_t c0 = (i % grid_cols) * patch;
    for (std::size_t pr = 0; pr < patch; ++pr) {
      for (std::size_t pc = 0; pc < patch; ++pc) {
        pixel_of[i * patch * patch + pr * patch + pc] = (r0 + pr) * width + c0 + pc;
      }
    }
  }
  const auto& xv = x.value();
  Tensor<T> out({grid_rows * patch, width});
  for (std::size_t q = 0; q < pixel_of.size(); ++q) {
    out[pixel_of[q]] = xv[q];
  }
  const std::uint32_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, pixel_of = std::move(pixel_of)](Tape<T>& tape, std::uint32_t self) {
    auto g = tape.grad(self);
    auto gx = tape.grad(ix);
    for (std::size_t q = 0; q < pixel_of.size(); ++q) {
      gx[q] += g[pixel_of[q]];
    }
  });
}

#define EEVG_INSTANTIATE(T)                                                                            \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                             \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                 \
  template Var<T> transpose(const Var<T>&);                                                            \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> div(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> minimum(const Var<T>&, const Var<T>&);                                               \
  template Var<T> maximum(const Var<T>&, const Var<T>&);                                               \
  template Var<T> add_row(const Var<T>&, const Var<T>&);                                               \
  template Var<T> scale(const Var<T>&, T);                                                             \
  template Var<T> add_scalar(const Var<T>&, T);                                                        \
  template Var<T> relu(const Var<T>&);                                                                 \
  template Var<T> exp(const Var<T>&);                                                                  \
  template Var<T> log(const Var<T>&);                                                                  \
  template Var<T> sigmoid(const Var<T>&);                                                              \
  template Var<T> gelu(const Var<T>&);                                                                 \
  template Var<T> smooth_l1(const Var<T>&);                                                            \
  template Var<T> sum(const Var<T>&);                                                                  \
  template Var<T> mean(const Var<T>&);                                                                 \
  template Var<T> softmax_rows(const Var<T>&, std::span<const std::uint8_t>);                          \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                          \
  template Var<T> conv2d_1ch(const Var<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> slice_rows(const Var<T>&, std::size_t, std::size_t);                                 \
  template Var<T> slice_cols(const Var<T>&, std::size_t, std::size_t);                                 \
  template Var<T> concat_rows(std::span<const Var<T>>);                                                \
  template Var<T> concat_cols(std::span<const Var<T>>);                                                \
  template Var<T> gather_rows(const Var<T>&, std::span<const std::size_t>);                            \
  template Var<T> scatter_rows(const Var<T>&, std::span<const std::size_t>, std::size_t);              \
  template Var<T> patches_to_image(const Var<T>&, std::size_t, std::size_t, std::size_t);

EEVG_INSTANTIATE(float)
EEVG_INSTANTIATE(double)

#undef EEVG_INSTANTIATE

}  // namespace eevg::ops
