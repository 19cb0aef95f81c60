#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "eevg/elimination/elimination.hpp"
#include "eevg/numerics/init.hpp"
#include "eevg/numerics/ops.hpp"

namespace eevg {

inline constexpr std::size_t kMaskConvSize = 5;

/// Normalized center-format box.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

template <typename T>
BBox to_bbox(const Tensor<T>& row);

// Corner form (x0, y0, x1, y1) → IoU; 0 when the union is empty.
double box_iou(const BBox& a, const BBox& b);

template <typename T>
struct HeadWeights {
  // Detection MLP C→C→4.
  Tensor<T> det_w1, det_b1, det_w2, det_b2;
  // Mask MLP C→C→P².
  Tensor<T> mask_w1, mask_b1, mask_w2, mask_b2;
  // 5×5 kernel and a 1×1 bias.
  Tensor<T> conv_kernel, conv_bias;

  std::size_t patch() const;

  // The conv kernel starts as a centre delta so that M′ passes through
  // unchanged at initialization.
  static HeadWeights init(std::size_t channels, std::size_t patch, Rng& rng);

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
    f(p + "det.w1", s.det_w1);
    f(p + "det.b1", s.det_b1);
    f(p + "det.w2", s.det_w2);
    f(p + "det.b2", s.det_b2);
    f(p + "mask.w1", s.mask_w1);
    f(p + "mask.b1", s.mask_b1);
    f(p + "mask.w2", s.mask_w2);
    f(p + "mask.b2", s.mask_b2);
    f(p + "mask.conv", s.conv_kernel);
    f(p + "mask.conv_bias", s.conv_bias);
  }
};

template <typename T>
struct MaskPrediction {
  Var<T> patch_logits;  // N×P², zero rows at eliminated patches
  Var<T> dense_logits;  // H×W
  Var<T> mask;          // H×W, sigmoid of the convolved logits
};

// 1×4 (cx, cy, w, h), each in (0, 1).
template <typename T>
Var<T> detection_head(const Var<T>& loc_token, const HeadWeights<T>& w);

// tokens are the N′ surviving visual tokens in token_set order. Throws
// DimensionError if the token set, the token rows and the grid disagree.
template <typename T>
MaskPrediction<T> sparse_mask_head(const Var<T>& tokens, const TokenSet& token_set, const HeadWeights<T>& w,
                                   PatchGrid grid);

std::size_t detection_head_parameters(std::size_t channels);
std::size_t mask_head_parameters(std::size_t channels, std::size_t patch);

// round(255·M) as binary PGM.
template <typename T>
void export_mask_pgm(const std::filesystem::path& path, const Tensor<T>& mask);
// "cx,cy,w,h" with 6 decimals.
std::string box_csv_line(const BBox& b);

}  // namespace eevg
