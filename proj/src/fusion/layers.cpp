#include "eevg/fusion/layers.hpp"

namespace eevg {

template <typename T>
FeedForwardParams<T> FeedForwardParams<T>::init(std::size_t channels, std::size_t hidden, Rng& rng) {
  if (hidden == 0) {
    throw ConfigError("feed-forward hidden width must be positive");
  }
  FeedForwardParams p;
  p.w1 = xavier_uniform<T>(channels, hidden, rng);
  p.b1 = Tensor<T>({1, hidden});
  p.w2 = xavier_uniform<T>(hidden, channels, rng);
  p.b2 = Tensor<T>({1, channels});
  return p;
}

template <typename T>
LayerNormParams<T> LayerNormParams<T>::init(std::size_t channels) {
  return {Tensor<T>({1, channels}, T{1}), Tensor<T>({1, channels}, T{0})};
}

template <typename T>
LayerWeights<T> LayerWeights<T>::init(std::size_t channels, std::size_t heads, std::size_t ffn_dim, Rng& rng) {
  LayerWeights w;
  w.msa = AttentionParams<T>::init(channels, heads, rng);
  w.mca = AttentionParams<T>::init(channels, heads, rng);
  w.ffn = FeedForwardParams<T>::init(channels, ffn_dim, rng);
  w.ln1 = LayerNormParams<T>::init(channels);
  w.ln2 = LayerNormParams<T>::init(channels);
  w.ln3 = LayerNormParams<T>::init(channels);
  return w;
}

template <typename T>
EncoderLayerWeights<T> EncoderLayerWeights<T>::init(std::size_t channels, std::size_t heads, std::size_t ffn_dim,
                                                    Rng& rng) {
  EncoderLayerWeights w;
  w.msa = AttentionParams<T>::init(channels, heads, rng);
  w.ffn = FeedForwardParams<T>::init(channels, ffn_dim, rng);
  w.ln1 = LayerNormParams<T>::init(channels);
  w.ln2 = LayerNormParams<T>::init(channels);
  return w;
}

namespace {

template <typename T>
Var<T> add_norm(const Var<T>& residual, const Var<T>& branch, const LayerNormParams<T>& ln) {
  Tape<T>& tape = residual.tape();
  return ops::layer_norm(ops::add(branch, residual), tape.parameter(ln.gamma), tape.parameter(ln.beta),
                         static_cast<T>(kLayerNormEps));
}

}  // namespace

template <typename T>
Var<T> feed_forward(const Var<T>& x, const FeedForwardParams<T>& p) {
  Tape<T>& tape = x.tape();
  const Var<T> hidden = ops::gelu(ops::linear(x, tape.parameter(p.w1), tape.parameter(p.b1)));
  return ops::linear(hidden, tape.parameter(p.w2), tape.parameter(p.b2));
}

template <typename T>
DecoderLayerResult<T> decoder_layer_forward(const FusionState<T>& state, const LayerWeights<T>& w) {
  SelfAttentionResult<T> sa = multi_head_self_attention(state.tokens, w.msa);
  Var<T> x = add_norm(state.tokens, sa.out, w.ln1);
  if (state.memory.valid()) {
    x = add_norm(x, multi_head_cross_attention(x, state.memory, state.memory_mask, w.mca), w.ln2);
  }
  x = add_norm(x, feed_forward(x, w.ffn), w.ln3);

  const std::size_t heads = sa.loc_scores.rows();
  const std::size_t n = sa.loc_scores.cols();
  Tensor<T> mean({1, n});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t j = 0; j < n; ++j) {
      mean[j] += sa.loc_scores(h, j);
    }
  }
  for (T& v : mean.data()) {
    v /= static_cast<T>(heads);
  }
  FusionState<T> next{x, state.memory, state.memory_mask, state.token_set};
  return {std::move(next), std::move(sa.loc_scores), std::move(mean)};
}

template <typename T>
Var<T> encoder_layer_forward(const Var<T>& x, const EncoderLayerWeights<T>& w, std::span<const std::uint8_t> key_mask) {
  SelfAttentionResult<T> sa = multi_head_self_attention(x, w.msa, key_mask);
  const Var<T> y = add_norm(x, sa.out, w.ln1);
  return add_norm(y, feed_forward(y, w.ffn), w.ln2);
}

#define EEVG_INSTANTIATE(T)                                                                      \
  template struct FeedForwardParams<T>;                                                          \
  template struct LayerNormParams<T>;                                                            \
  template struct LayerWeights<T>;                                                               \
  template struct EncoderLayerWeights<T>;                                                        \
  template Var<T> feed_forward(const Var<T>&, const FeedForwardParams<T>&);                      \
  template DecoderLayerResult<T> decoder_layer_forward(const FusionState<T>&, const LayerWeights<T>&); \
  template Var<T> encoder_layer_forward(const Var<T>&, const EncoderLayerWeights<T>&, std::span<const std::uint8_t>);

EEVG_INSTANTIATE(float)
EEVG_INSTANTIATE(double)

#undef EEVG_INSTANTIATE

}  // namespace eevg
