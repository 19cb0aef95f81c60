#include "eevg/fusion/attention.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace eevg {

template <typename T>
AttentionParams<T> AttentionParams<T>::init(std::size_t channels, std::size_t heads, Rng& rng) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide " + std::to_string(channels) +
                      " channels");
  }
  AttentionParams p;
  p.heads = heads;
  p.wq = xavier_uniform<T>(channels, channels, rng);
  p.wk = xavier_uniform<T>(channels, channels, rng);
  p.wv = xavier_uniform<T>(channels, channels, rng);
  p.wo = xavier_uniform<T>(channels, channels, rng);
  p.bq = Tensor<T>({1, channels});
  p.bk = Tensor<T>({1, channels});
  p.bv = Tensor<T>({1, channels});
  p.bo = Tensor<T>({1, channels});
  return p;
}

namespace {

template <typename T>
struct Attended {
  Var<T> out;
  Tensor<T> row0;  // heads × keys
};

template <typename T>
Attended<T> attend(const Var<T>& query, const Var<T>& source, std::span<const std::uint8_t> mask,
                   const AttentionParams<T>& p) {
  const std::size_t c = p.channels();
  if (p.heads == 0 || c % p.heads != 0) {
    throw ConfigError("attention: " + std::to_string(p.heads) + " heads do not divide " + std::to_string(c) +
                      " channels");
  }
  if (query.cols() != c || source.cols() != c) {
    throw DimensionError("attention: inputs " + shape_string(query.shape()) + " and " + shape_string(source.shape()) +
                         " do not have " + std::to_string(c) + " channels");
  }
  Tape<T>& tape = query.tape();
  const std::size_t d = p.head_dim();
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  const Var<T> q = ops::linear(query, tape.parameter(p.wq), tape.parameter(p.bq));
  const Var<T> k = ops::linear(source, tape.parameter(p.wk), tape.parameter(p.bk));
  const Var<T> v = ops::linear(source, tape.parameter(p.wv), tape.parameter(p.bv));

  const std::size_t keys = source.rows();
  Tensor<T> row0({p.heads, keys});
  std::vector<Var<T>> head_out;
  head_out.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Var<T> qh = p.heads == 1 ? q : ops::slice_cols(q, h * d, d);
    const Var<T> kh = p.heads == 1 ? k : ops::slice_cols(k, h * d, d);
    const Var<T> vh = p.heads == 1 ? v : ops::slice_cols(v, h * d, d);
    const Var<T> probs = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt_d), mask);
    std::copy_n(probs.value().data().begin(), keys, row0.data().begin() + h * keys);
    head_out.push_back(ops::matmul(probs, vh));
  }
  const Var<T> merged = p.heads == 1 ? head_out.front() : ops::concat_cols<T>(head_out);
  return {ops::linear(merged, tape.parameter(p.wo), tape.parameter(p.bo)), std::move(row0)};
}

}  // namespace

template <typename T>
SelfAttentionResult<T> multi_head_self_attention(const Var<T>& x, const AttentionParams<T>& p,
                                                 std::span<const std::uint8_t> key_mask) {
  if (x.rows() < 2) {
    throw DimensionError("self-attention needs the location token plus at least one visual token, got " +
                         shape_string(x.shape()));
  }
  if (!key_mask.empty() && key_mask.size() != x.rows()) {
    throw DimensionError("self-attention: mask length " + std::to_string(key_mask.size()) + " for input " +
                         shape_string(x.shape()));
  }
  Attended<T> a = attend<T>(x, x, key_mask, p);
  const std::size_t keys = x.rows();
  Tensor<T> loc({p.heads, keys - 1});
  for (std::size_t h = 0; h < p.heads; ++h) {
    std::copy_n(a.row0.data().begin() + h * keys + 1, keys - 1, loc.data().begin() + h * (keys - 1));
  }
  return {a.out, std::move(loc)};
}

template <typename T>
Var<T> multi_head_cross_attention(const Var<T>& query, const Var<T>& memory, std::span<const std::uint8_t> mask,
                                  const AttentionParams<T>& p) {
  if (!mask.empty() && mask.size() != memory.rows()) {
    throw DimensionError("cross-attention: mask length " + std::to_string(mask.size()) + " for memory " +
                         shape_string(memory.shape()));
  }
  if (!mask.empty() && std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw PreconditionError("cross-attention: memory is fully masked");
  }
  return attend<T>(query, memory, mask, p).out;
}

template struct AttentionParams<float>;
template struct AttentionParams<double>;
template SelfAttentionResult<float> multi_head_self_attention(const Var<float>&, const AttentionParams<float>&,
                                                              std::span<const std::uint8_t>);
template SelfAttentionResult<double> multi_head_self_attention(const Var<double>&, const AttentionParams<double>&,
                                                               std::span<const std::uint8_t>);
template Var<float> multi_head_cross_attention(const Var<float>&, const Var<float>&, std::span<const std::uint8_t>,
                                               const AttentionParams<float>&);
template Var<double> multi_head_cross_attention(const Var<double>&, const Var<double>&, std::span<const std::uint8_t>,
                                                const AttentionParams<double>&);

}  // namespace eevg
