#pragma once

#include <cstddef>

namespace eevg {

/// Shape of one fusion stack, for analytic cost estimates.
struct FusionDims {
  std::size_t visual_tokens = 0;  // N (or N′ after elimination)
  std::size_t text_tokens = 0;    // L
  std::size_t channels = 0;       // C
  std::size_t ffn_dim = 0;
  std::size_t layers = 1;
};

struct FfnDims {
  std::size_t decoder;
  std::size_t encoder;
};

// Feed-forward widths that keep decoder and encoder stacks at comparable
// parameter counts: 4C/3 and 8C/3 (1024 and 2048 at C = 768).
FfnDims matched_ffn_dims(std::size_t channels);

// Floating-point operations (a multiply-add counts as 2) of a forward pass,
// counting projections, attention products and feed-forward matmuls.
//
// Decoder, T = 1 + N per layer:
//   self-attention   8·T·C² + 4·T²·C
//   cross-attention  4·T·C² + 4·L·C² + 4·T·L·C
//   feed-forward     4·T·C·D
// Encoder, T = 1 + L + N per layer:
//   self-attention   8·T·C² + 4·T²·C
//   feed-forward     4·T·C·D
double decoder_fusion_flops(const FusionDims& d);
double encoder_fusion_flops(const FusionDims& d);

}  // namespace eevg
