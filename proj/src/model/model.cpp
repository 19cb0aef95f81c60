#include "eevg/model/model.hpp"

#include <algorithm>

#include "eevg/fusion/flops.hpp"

namespace eevg {

namespace {

template <typename T, typename W>
void init_embeddings(W& w, const EEVGConfig& cfg, Rng& rng) {
  w.vis_w = xavier_uniform<T>(cfg.C_v, cfg.C, rng);
  w.vis_b = Tensor<T>({1, cfg.C});
  w.txt_w = xavier_uniform<T>(cfg.C_l, cfg.C, rng);
  w.txt_b = Tensor<T>({1, cfg.C});
  w.loc_token = xavier_uniform<T>(1, cfg.C, rng);
  w.pos_embed = xavier_uniform<T>(cfg.N(), cfg.C, rng);
}

void check_inputs(const EEVGConfig& cfg, std::size_t vis_rows, std::size_t vis_cols, std::size_t txt_rows,
                  std::size_t txt_cols, std::size_t mask_size) {
  if (vis_rows != cfg.N() || vis_cols != cfg.C_v) {
    throw DimensionError("visual features are " + std::to_string(vis_rows) + "x" + std::to_string(vis_cols) +
                         ", config expects " + std::to_string(cfg.N()) + "x" + std::to_string(cfg.C_v));
  }
  if (txt_cols != cfg.C_l || txt_rows == 0 || txt_rows > cfg.L_max) {
    throw DimensionError("text features are " + std::to_string(txt_rows) + "x" + std::to_string(txt_cols) +
                         ", config expects up to " + std::to_string(cfg.L_max) + "x" + std::to_string(cfg.C_l));
  }
  if (mask_size != 0 && mask_size != txt_rows) {
    throw DimensionError("padding mask has " + std::to_string(mask_size) + " entries for " +
                         std::to_string(txt_rows) + " text tokens");
  }
}

template <typename T, typename W>
Var<T> embed_visual(const Var<T>& visual, const W& w) {
  Tape<T>& tape = visual.tape();
  return ops::add(ops::linear(visual, tape.parameter(w.vis_w), tape.parameter(w.vis_b)), tape.parameter(w.pos_embed));
}

template <typename T, typename W>
Var<T> embed_text(const Var<T>& text, const W& w) {
  Tape<T>& tape = text.tape();
  return ops::linear(text, tape.parameter(w.txt_w), tape.parameter(w.txt_b));
}

}  // namespace

template <typename T>
ModelWeights<T> ModelWeights<T>::init(const EEVGConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelWeights w;
  init_embeddings<T>(w, cfg, rng);
  for (std::size_t i = 0; i < cfg.D_layers; ++i) {
    w.layers.push_back(LayerWeights<T>::init(cfg.C, cfg.h, cfg.D_ffn, rng));
  }
  w.heads = HeadWeights<T>::init(cfg.C, cfg.P, rng);
  return w;
}

template <typename T>
EncoderModelWeights<T> EncoderModelWeights<T>::init(const EEVGConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderModelWeights w;
  init_embeddings<T>(w, cfg, rng);
  for (std::size_t i = 0; i < cfg.D_layers; ++i) {
    w.layers.push_back(EncoderLayerWeights<T>::init(cfg.C, cfg.h, 2 * cfg.D_ffn, rng));
  }
  w.heads = HeadWeights<T>::init(cfg.C, cfg.P, rng);
  return w;
}

std::vector<std::size_t> ForwardDiagnostics::keep_counts() const {
  std::vector<std::size_t> out;
  for (const auto& l : layers) {
    out.push_back(l.kept);
  }
  return out;
}

template <typename T>
ForwardResult<T> eevg_forward(const Var<T>& visual, const Var<T>& text, std::span<const std::uint8_t> pad_mask,
                              const EEVGConfig& cfg, const ModelWeights<T>& w, std::span<const TokenSet> replay) {
  check_inputs(cfg, visual.rows(), visual.cols(), text.rows(), text.cols(), pad_mask.size());
  if (w.layers.size() != cfg.D_layers) {
    throw ConfigError("weights hold " + std::to_string(w.layers.size()) + " layers, config asks for " +
                      std::to_string(cfg.D_layers));
  }
  if (!replay.empty() && replay.size() != cfg.D_layers) {
    throw DimensionError("replay holds " + std::to_string(replay.size()) + " token sets for " +
                         std::to_string(cfg.D_layers) + " layers");
  }
  Tape<T>& tape = visual.tape();
  const std::vector<Var<T>> seq = {tape.parameter(w.loc_token), embed_visual(visual, w)};

  FusionState<T> state;
  state.tokens = ops::concat_rows<T>(seq);
  state.memory = embed_text(text, w);
  state.memory_mask.assign(pad_mask.begin(), pad_mask.end());
  state.token_set = TokenSet::all(cfg.N());

  ForwardResult<T> out;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    DecoderLayerResult<T> r = decoder_layer_forward(state, w.layers[l]);
    LayerDiagnostics d;
    d.before = state.token_set;
    d.raw = location_attention_scores(r.loc_scores_per_head);
    d.smoothed = adaptive_spatial_attention(d.raw, state.token_set, cfg.grid(), cfg.k);
    d.normalized = minmax_normalize(d.smoothed);
    if (!replay.empty()) {
      std::vector<std::size_t> positions;
      for (std::size_t original : replay[l].kept()) {
        const auto p = state.token_set.position_of(original);
        if (!p) {
          throw PreconditionError("replayed token " + std::to_string(original) + " was eliminated before layer " +
                                  std::to_string(l));
        }
        positions.push_back(*p);
      }
      state = positions.size() == state.visual_count() ? r.state : keep_positions(r.state, positions);
    } else {
      switch (cfg.elimination) {
        case EliminationMode::dynamic:
          state = eliminate_tokens(r.state, d.normalized, cfg.alpha);
          break;
        case EliminationMode::fixed:
          state = static_eliminate(r.state, d.smoothed, cfg.static_m);
          break;
        case EliminationMode::none:
          state = r.state;
          break;
      }
    }
    d.after = state.token_set;
    d.kept = state.visual_count();
    out.diagnostics.layers.push_back(std::move(d));
  }
  out.diagnostics.final_tokens = state.token_set;
  out.prediction.box = detection_head(state.location_token(), w.heads);
  out.prediction.mask = sparse_mask_head(state.visual_tokens(), state.token_set, w.heads, cfg.grid());
  return out;
}

template <typename T>
Prediction<T> encoder_baseline_forward(const Var<T>& visual, const Var<T>& text,
                                       std::span<const std::uint8_t> pad_mask, const EEVGConfig& cfg,
                                       const EncoderModelWeights<T>& w) {
  check_inputs(cfg, visual.rows(), visual.cols(), text.rows(), text.cols(), pad_mask.size());
  Tape<T>& tape = visual.tape();
  const std::size_t l = text.rows();
  const std::vector<Var<T>> seq = {tape.parameter(w.loc_token), embed_text(text, w), embed_visual(visual, w)};
  Var<T> x = ops::concat_rows<T>(seq);
  std::vector<std::uint8_t> key_mask;
  if (!pad_mask.empty()) {
    key_mask.assign(x.rows(), 1);
    std::copy(pad_mask.begin(), pad_mask.end(), key_mask.begin() + 1);
  }
  for (const auto& lw : w.layers) {
    x = encoder_layer_forward(x, lw, key_mask);
  }
  Prediction<T> p;
  p.box = detection_head(ops::slice_rows(x, 0, 1), w.heads);
  p.mask = sparse_mask_head(ops::slice_rows(x, 1 + l, cfg.N()), TokenSet::all(cfg.N()), w.heads, cfg.grid());
  return p;
}

double decoder_model_flops(const EEVGConfig& cfg, std::size_t text_tokens) {
  return decoder_fusion_flops({cfg.N(), text_tokens, cfg.C, cfg.D_ffn, cfg.D_layers});
}

double encoder_model_flops(const EEVGConfig& cfg, std::size_t text_tokens) {
  return encoder_fusion_flops({cfg.N(), text_tokens, cfg.C, 2 * cfg.D_ffn, cfg.D_layers});
}

#define EEVG_INSTANTIATE(T)                                                                                   \
  template struct ModelWeights<T>;                                                                            \
  template struct EncoderModelWeights<T>;                                                                     \
  template ForwardResult<T> eevg_forward(const Var<T>&, const Var<T>&, std::span<const std::uint8_t>,         \
                                         const EEVGConfig&, const ModelWeights<T>&, std::span<const TokenSet>); \
  template Prediction<T> encoder_baseline_forward(const Var<T>&, const Var<T>&, std::span<const std::uint8_t>, \
                                                  const EEVGConfig&, const EncoderModelWeights<T>&);

EEVG_INSTANTIATE(float)
EEVG_INSTANTIATE(double)

#undef EEVG_INSTANTIATE

}  // namespace eevg
