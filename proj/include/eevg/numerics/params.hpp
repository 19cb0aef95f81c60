#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "eevg/numerics/tensor.hpp"

namespace eevg {

// Works with any weight struct exposing visit(prefix, f(name, tensor)).
template <typename W>
std::size_t count_parameters(const W& w) {
  std::size_t n = 0;
  w.visit("", [&](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

template <typename T, typename W>
std::vector<Tensor<T>*> parameter_list(W& w) {
  std::vector<Tensor<T>*> out;
  w.visit("", [&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
  return out;
}

}  // namespace eevg
