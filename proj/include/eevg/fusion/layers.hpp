#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eevg/elimination/token_set.hpp"
#include "eevg/fusion/attention.hpp"

namespace eevg {

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct FeedForwardParams {
  Tensor<T> w1, b1, w2, b2;  // C×D, 1×D, D×C, 1×C

  static FeedForwardParams init(std::size_t channels, std::size_t hidden, Rng& rng);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + "w1", w1), f(p + "b1", b1), f(p + "w2", w2), f(p + "b2", b2);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    f(p + "w1", w1), f(p + "b1", b1), f(p + "w2", w2), f(p + "b2", b2);
  }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma, beta;  // 1×C, ones and zeros at init

  static LayerNormParams init(std::size_t channels);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + "gamma", gamma), f(p + "beta", beta);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    f(p + "gamma", gamma), f(p + "beta", beta);
  }
};

/// One post-norm decoder layer: self-attention, cross-attention over the
/// linguistic memory, feed-forward; each followed by residual add and LN.
template <typename T>
struct LayerWeights {
  AttentionParams<T> msa;
  AttentionParams<T> mca;
  FeedForwardParams<T> ffn;
  LayerNormParams<T> ln1, ln2, ln3;

  static LayerWeights init(std::size_t channels, std::size_t heads, std::size_t ffn_dim, Rng& rng);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    msa.visit(p + "msa.", f), mca.visit(p + "mca.", f), ffn.visit(p + "ffn.", f);
    ln1.visit(p + "ln1.", f), ln2.visit(p + "ln2.", f), ln3.visit(p + "ln3.", f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    msa.visit(p + "msa.", f), mca.visit(p + "mca.", f), ffn.visit(p + "ffn.", f);
    ln1.visit(p + "ln1.", f), ln2.visit(p + "ln2.", f), ln3.visit(p + "ln3.", f);
  }
};

/// Joint self-attention layer of the encoder baseline: MSA and FFN with
/// post-norm residuals, no cross-attention.
template <typename T>
struct EncoderLayerWeights {
  AttentionParams<T> msa;
  FeedForwardParams<T> ffn;
  LayerNormParams<T> ln1, ln2;

  static EncoderLayerWeights init(std::size_t channels, std::size_t heads, std::size_t ffn_dim, Rng& rng);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    msa.visit(p + "msa.", f), ffn.visit(p + "ffn.", f), ln1.visit(p + "ln1.", f), ln2.visit(p + "ln2.", f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    msa.visit(p + "msa.", f), ffn.visit(p + "ffn.", f), ln1.visit(p + "ln1.", f), ln2.visit(p + "ln2.", f);
  }
};

/// Everything that flows between decoder layers.
///
/// `tokens` is the (1+N′)×C query sequence with the location token at row 0
/// and the surviving visual tokens after it, in token_set order.
template <typename T>
struct FusionState {
  Var<T> tokens;
  // L×C linguistic memory. An invalid (default) Var means no memory; the
  // decoder layer then skips its cross-attention sub-layer.
  Var<T> memory;
  // One entry per memory row, 1 = real token. Empty means all real.
  std::vector<std::uint8_t> memory_mask;
  TokenSet token_set;

  std::size_t visual_count() const { return tokens.rows() - 1; }
  Var<T> location_token() const { return ops::slice_rows(tokens, 0, 1); }
  Var<T> visual_tokens() const { return ops::slice_rows(tokens, 1, visual_count()); }
};

template <typename T>
struct DecoderLayerResult {
  FusionState<T> state;
  // heads × N′ location-row attention of the self-attention sub-layer.
  Tensor<T> loc_scores_per_head;
  // 1 × N′ head mean of the above.
  Tensor<T> loc_scores;
};

template <typename T>
Var<T> feed_forward(const Var<T>& x, const FeedForwardParams<T>& p);

// Token count is unchanged; elimination is a separate step.
template <typename T>
DecoderLayerResult<T> decoder_layer_forward(const FusionState<T>& state, const LayerWeights<T>& w);

// x is [loc; linguistic; visual], (1+L+N)×C. key_mask marks real rows
// (linguistic padding gets 0); empty means all rows are real.
template <typename T>
Var<T> encoder_layer_forward(const Var<T>& x, const EncoderLayerWeights<T>& w,
                             std::span<const std::uint8_t> key_mask = {});

}  // namespace eevg
