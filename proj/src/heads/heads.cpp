#include "eevg/heads/heads.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "eevg/numerics/pgm.hpp"

namespace eevg {

template <typename T>
BBox to_bbox(const Tensor<T>& row) {
  if (row.size() != 4) {
    throw DimensionError("box needs 4 values, got " + shape_string(row.shape()));
  }
  return {static_cast<double>(row[0]), static_cast<double>(row[1]), static_cast<double>(row[2]),
          static_cast<double>(row[3])};
}

double box_iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

template <typename T>
std::size_t HeadWeights<T>::patch() const {
  return static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(mask_w2.cols()))));
}

template <typename T>
HeadWeights<T> HeadWeights<T>::init(std::size_t channels, std::size_t patch, Rng& rng) {
  if (channels == 0 || patch == 0) {
    throw ConfigError("heads need positive channels and patch size");
  }
  HeadWeights w;
  w.det_w1 = xavier_uniform<T>(channels, channels, rng);
  w.det_b1 = Tensor<T>({1, channels});
  w.det_w2 = xavier_uniform<T>(channels, 4, rng);
  w.det_b2 = Tensor<T>({1, 4});
  w.mask_w1 = xavier_uniform<T>(channels, channels, rng);
  w.mask_b1 = Tensor<T>({1, channels});
  w.mask_w2 = xavier_uniform<T>(channels, patch * patch, rng);
  w.mask_b2 = Tensor<T>({1, patch * patch});
  w.conv_kernel = Tensor<T>({kMaskConvSize, kMaskConvSize});
  w.conv_kernel(kMaskConvSize / 2, kMaskConvSize / 2) = T{1};
  w.conv_bias = Tensor<T>({1, 1});
  return w;
}

template <typename T>
Var<T> detection_head(const Var<T>& loc_token, const HeadWeights<T>& w) {
  Tape<T>& tape = loc_token.tape();
  const Var<T> hidden = ops::gelu(ops::linear(loc_token, tape.parameter(w.det_w1), tape.parameter(w.det_b1)));
  return ops::sigmoid(ops::linear(hidden, tape.parameter(w.det_w2), tape.parameter(w.det_b2)));
}

template <typename T>
MaskPrediction<T> sparse_mask_head(const Var<T>& tokens, const TokenSet& token_set, const HeadWeights<T>& w,
                                   PatchGrid grid) {
  if (token_set.total() != grid.size() || tokens.rows() != token_set.size()) {
    throw DimensionError("mask head: " + std::to_string(tokens.rows()) + " token rows, " +
                         std::to_string(token_set.size()) + "/" + std::to_string(token_set.total()) +
                         " kept tokens and a " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                         " grid disagree");
  }
  Tape<T>& tape = tokens.tape();
  const Var<T> hidden = ops::gelu(ops::linear(tokens, tape.parameter(w.mask_w1), tape.parameter(w.mask_b1)));
  const Var<T> logits = ops::linear(hidden, tape.parameter(w.mask_w2), tape.parameter(w.mask_b2));
  MaskPrediction<T> out;
  out.patch_logits = ops::scatter_rows(logits, token_set.kept(), grid.size());
  out.dense_logits = ops::patches_to_image(out.patch_logits, grid.rows, grid.cols, w.patch());
  out.mask = ops::sigmoid(ops::conv2d_1ch(out.dense_logits, tape.parameter(w.conv_kernel), tape.parameter(w.conv_bias)));
  return out;
}

std::size_t detection_head_parameters(std::size_t channels) {
  return channels * channels + channels + channels * 4 + 4;
}

std::size_t mask_head_parameters(std::size_t channels, std::size_t patch) {
  const std::size_t p2 = patch * patch;
  return channels * channels + channels + channels * p2 + p2 + kMaskConvSize * kMaskConvSize + 1;
}

template <typename T>
void export_mask_pgm(const std::filesystem::path& path, const Tensor<T>& mask) {
  std::vector<double> values(mask.data().begin(), mask.data().end());
  write_pgm(path, values, mask.rows(), mask.cols());
}

std::string box_csv_line(const BBox& b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", b.cx, b.cy, b.w, b.h);
  return buf;
}

#define EEVG_INSTANTIATE(T)                                                                                   \
  template BBox to_bbox(const Tensor<T>&);                                                                    \
  template struct HeadWeights<T>;                                                                             \
  template Var<T> detection_head(const Var<T>&, const HeadWeights<T>&);                                       \
  template MaskPrediction<T> sparse_mask_head(const Var<T>&, const TokenSet&, const HeadWeights<T>&, PatchGrid); \
  template void export_mask_pgm(const std::filesystem::path&, const Tensor<T>&);

EEVG_INSTANTIATE(float)
EEVG_INSTANTIATE(double)

#undef EEVG_INSTANTIATE

}  // namespace eevg
