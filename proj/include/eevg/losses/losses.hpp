#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eevg/heads/heads.hpp"

namespace eevg {

struct LossConfig {
  double lambda_det = 0.1;
  double lambda_seg = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double dice_eps = 1.0;

  // Throws ConfigError on a negative weight or γ, α_f outside [0, 1] or ε_d ≤ 0.
  void validate() const;
};

struct GroundTruth {
  BBox box;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> mask;  // rows×cols, values 0 or 1
};

template <typename T>
struct LossBundle {
  Var<T> smooth, giou, focal, dice;
  Var<T> det, seg, total;
};

struct LossValues {
  double smooth = 0.0, giou = 0.0, focal = 0.0, dice = 0.0;
  double det = 0.0, seg = 0.0, total = 0.0;

  LossValues& operator+=(const LossValues& o);
  LossValues scaled(double s) const;
};

template <typename T>
LossValues loss_values(const LossBundle<T>& b);

// Mean over the four components of the unit-transition Huber loss.
template <typename T>
Var<T> smooth_l1_loss(const Var<T>& box, const BBox& gt);

// 1 − GIoU on corner-converted center boxes. When both boxes have zero area
// the loss is the constant 1.
template <typename T>
Var<T> giou_loss(const Var<T>& box, const BBox& gt);

// Mean over pixels of −α_t (1 − p_t)^γ log p_t. p_t is clamped away from 0 so
// a saturated prediction costs a large finite amount.
template <typename T>
Var<T> focal_loss(const Var<T>& mask, std::span<const std::uint8_t> gt, double gamma, double alpha);

// 1 − (2·Σ M·G + ε) / (Σ M + Σ G + ε).
template <typename T>
Var<T> dice_loss(const Var<T>& mask, std::span<const std::uint8_t> gt, double eps);

template <typename T>
LossBundle<T> joint_loss(const Var<T>& box, const Var<T>& mask, const GroundTruth& gt, const LossConfig& cfg);

}  // namespace eevg
