#include "eevg/numerics/optim.hpp"

#include <cmath>
#include <string>

namespace eevg {

template <typename T>
void adamw_step(std::span<Tensor<T>* const> params, OptimState<T>& state) {
  auto& h = state.hyper;
  if (!(h.lr > 0.0)) {
    throw ConfigError("adamw: learning rate must be positive");
  }
  if (state.first_moment.empty() && state.step == 0) {
    for (const Tensor<T>* p : params) {
      state.first_moment.emplace_back(p->size(), T{0});
      state.second_moment.emplace_back(p->size(), T{0});
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adamw: state tracks " + std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(h.beta1, t);
  const double corr2 = 1.0 - std::pow(h.beta2, t);
  const T lr = static_cast<T>(h.lr);
  const T decay = static_cast<T>(1.0 - h.lr * h.weight_decay);
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T inv_corr1 = static_cast<T>(1.0 / corr1);
  const T inv_corr2 = static_cast<T>(1.0 / corr2);
  const T eps = static_cast<T>(h.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != p.size() || !p.has_grad()) {
      throw DimensionError("adamw: parameter " + std::to_string(k) + " " + shape_string(p.shape()) +
                           " does not match its moment buffer or has no gradient");
    }
    auto theta = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T mhat = m[i] * inv_corr1;
      const T vhat = v[i] * inv_corr2;
      theta[i] = theta[i] * decay - lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template void adamw_step(std::span<Tensor<float>* const>, OptimState<float>&);
template void adamw_step(std::span<Tensor<double>* const>, OptimState<double>&);

}  // namespace eevg
