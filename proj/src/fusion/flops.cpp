#include "eevg/fusion/flops.hpp"

#include <cmath>

namespace eevg {

FfnDims matched_ffn_dims(std::size_t channels) {
  const double c = static_cast<double>(channels);
  return {static_cast<std::size_t>(std::lround(4.0 * c / 3.0)), static_cast<std::size_t>(std::lround(8.0 * c / 3.0))};
}

namespace {

double self_attention_flops(double t, double c) { return 8.0 * t * c * c + 4.0 * t * t * c; }

double ffn_flops(double t, double c, double d) { return 4.0 * t * c * d; }

}  // namespace

double decoder_fusion_flops(const FusionDims& d) {
  const double t = 1.0 + static_cast<double>(d.visual_tokens);
  const double l = static_cast<double>(d.text_tokens);
  const double c = static_cast<double>(d.channels);
  const double cross = l > 0.0 ? 4.0 * t * c * c + 4.0 * l * c * c + 4.0 * t * l * c : 0.0;
  const double per_layer = self_attention_flops(t, c) + cross + ffn_flops(t, c, static_cast<double>(d.ffn_dim));
  return per_layer * static_cast<double>(d.layers);
}

double encoder_fusion_flops(const FusionDims& d) {
  const double t = 1.0 + static_cast<double>(d.visual_tokens + d.text_tokens);
  const double c = static_cast<double>(d.channels);
  const double per_layer = self_attention_flops(t, c) + ffn_flops(t, c, static_cast<double>(d.ffn_dim));
  return per_layer * static_cast<double>(d.layers);
}

}  // namespace eevg
