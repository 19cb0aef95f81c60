#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eevg/fusion/layers.hpp"
#include "eevg/heads/heads.hpp"
#include "eevg/model/config.hpp"

namespace eevg {

/// Projections into the fusion width, the location token, the positional
/// embedding of the visual grid, the decoder stack and both heads.
template <typename T>
struct ModelWeights {
  Tensor<T> vis_w, vis_b;  // C_v×C, 1×C
  Tensor<T> txt_w, txt_b;  // C_l×C, 1×C
  Tensor<T> loc_token;     // 1×C
  Tensor<T> pos_embed;     // N×C
  std::vector<LayerWeights<T>> layers;
  HeadWeights<T> heads;

  static ModelWeights init(const EEVGConfig& cfg, Rng& rng);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    visit_impl(*this, p, f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    visit_impl(*this, p, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    f(p + "vis.w", s.vis_w);
    f(p + "vis.b", s.vis_b);
    f(p + "txt.w", s.txt_w);
    f(p + "txt.b", s.txt_b);
    f(p + "loc_token", s.loc_token);
    f(p + "pos_embed", s.pos_embed);
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      s.layers[i].visit(p + "layer" + std::to_string(i) + ".", f);
    }
    s.heads.visit(p + "head.", f);
  }
};

/// Encoder-fusion baseline: same embeddings and heads, joint self-attention
/// layers over [loc; linguistic; visual].
template <typename T>
struct EncoderModelWeights {
  Tensor<T> vis_w, vis_b, txt_w, txt_b, loc_token, pos_embed;
  std::vector<EncoderLayerWeights<T>> layers;
  HeadWeights<T> heads;

  // Encoder FFN width is 2·D_ffn, matching the decoder stack's parameters.
  static EncoderModelWeights init(const EEVGConfig& cfg, Rng& rng);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    visit_impl(*this, p, f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    visit_impl(*this, p, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    f(p + "vis.w", s.vis_w);
    f(p + "vis.b", s.vis_b);
    f(p + "txt.w", s.txt_w);
    f(p + "txt.b", s.txt_b);
    f(p + "loc_token", s.loc_token);
    f(p + "pos_embed", s.pos_embed);
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      s.layers[i].visit(p + "layer" + std::to_string(i) + ".", f);
    }
    s.heads.visit(p + "head.", f);
  }
};

template <typename T>
struct Prediction {
  Var<T> box;  // 1×4 center format
  MaskPrediction<T> mask;
};

struct LayerDiagnostics {
  TokenSet before;                // token set entering elimination
  TokenSet after;                 // token set leaving it
  AttentionScoreMap raw;          // head-mean location scores
  AttentionScoreMap smoothed;     // after adaptive spatial attention
  AttentionScoreMap normalized;   // after min-max
  std::size_t kept = 0;           // tokens surviving this layer
};

struct ForwardDiagnostics {
  std::vector<LayerDiagnostics> layers;
  TokenSet final_tokens;

  std::vector<std::size_t> keep_counts() const;
};

template <typename T>
struct ForwardResult {
  Prediction<T> prediction;
  ForwardDiagnostics diagnostics;
};

// visual: N×C_v features in patch order; text: L×C_l with 1 ≤ L ≤ L_max;
// pad_mask has one entry per text row (1 = real), empty meaning all real.
// The elimination mode comes from cfg.
//
// A nonempty `replay` (one TokenSet per layer, as recorded in
// LayerDiagnostics of an earlier pass) overrides the elimination decisions:
// layer l keeps exactly replay[l]'s tokens. Scores are still computed and
// reported. This evaluates the smooth piece of the model that autodiff
// differentiates, which finite-difference checks need near a threshold.
template <typename T>
ForwardResult<T> eevg_forward(const Var<T>& visual, const Var<T>& text, std::span<const std::uint8_t> pad_mask,
                              const EEVGConfig& cfg, const ModelWeights<T>& w, std::span<const TokenSet> replay = {});

template <typename T>
Prediction<T> encoder_baseline_forward(const Var<T>& visual, const Var<T>& text,
                                       std::span<const std::uint8_t> pad_mask, const EEVGConfig& cfg,
                                       const EncoderModelWeights<T>& w);

// Analytic fusion-stack flops of one forward pass at the config's N, C,
// layer count and the given text length.
double decoder_model_flops(const EEVGConfig& cfg, std::size_t text_tokens);
double encoder_model_flops(const EEVGConfig& cfg, std::size_t text_tokens);

}  // namespace eevg
