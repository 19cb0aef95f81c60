#include "eevg/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eevg {

namespace {

constexpr double kMinProbability = 1e-12;

template <typename T>
void require_box(const char* name, const Var<T>& box) {
  if (box.size() != 4) {
    throw DimensionError(std::string(name) + ": box must have 4 values, got " + shape_string(box.shape()));
  }
}

template <typename T>
void require_mask(const char* name, const Var<T>& mask, std::span<const std::uint8_t> gt) {
  if (mask.size() != gt.size()) {
    throw DimensionError(std::string(name) + ": prediction " + shape_string(mask.shape()) + " vs " +
                         std::to_string(gt.size()) + " ground-truth pixels");
  }
}

template <typename T>
Var<T> scalar(Tape<T>& tape, double v) {
  return tape.constant(Tensor<T>({1, 1}, static_cast<T>(v)));
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda_det >= 0.0) || !(lambda_seg >= 0.0)) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (!(focal_gamma >= 0.0)) {
    throw ConfigError("focal gamma must be nonnegative");
  }
  if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0)) {
    throw ConfigError("focal alpha must lie in [0, 1]");
  }
  if (!(dice_eps > 0.0)) {
    throw ConfigError("dice smoothing must be positive");
  }
}

LossValues& LossValues::operator+=(const LossValues& o) {
  smooth += o.smooth;
  giou += o.giou;
  focal += o.focal;
  dice += o.dice;
  det += o.det;
  seg += o.seg;
  total += o.total;
  return *this;
}

LossValues LossValues::scaled(double s) const {
  return {smooth * s, giou * s, focal * s, dice * s, det * s, seg * s, total * s};
}

template <typename T>
LossValues loss_values(const LossBundle<T>& b) {
  auto v = [](const Var<T>& x) { return static_cast<double>(x.value()[0]); };
  return {v(b.smooth), v(b.giou), v(b.focal), v(b.dice), v(b.det), v(b.seg), v(b.total)};
}

template <typename T>
Var<T> smooth_l1_loss(const Var<T>& box, const BBox& gt) {
  require_box("smooth_l1_loss", box);
  const Tensor<T> target(box.shape(), std::vector<T>{static_cast<T>(gt.cx), static_cast<T>(gt.cy),
                                                     static_cast<T>(gt.w), static_cast<T>(gt.h)});
  return ops::mean(ops::smooth_l1(ops::sub(box, box.tape().constant(target))));
}

template <typename T>
Var<T> giou_loss(const Var<T>& box, const BBox& gt) {
  require_box("giou_loss", box);
  Tape<T>& tape = box.tape();
  const Var<T> flat = box.rows() == 1 ? box : ops::transpose(box);
  const Var<T> cx = ops::slice_cols(flat, 0, 1);
  const Var<T> cy = ops::slice_cols(flat, 1, 1);
  const Var<T> w = ops::slice_cols(flat, 2, 1);
  const Var<T> h = ops::slice_cols(flat, 3, 1);
  const Var<T> x0 = ops::sub(cx, ops::scale(w, T(0.5)));
  const Var<T> x1 = ops::add(cx, ops::scale(w, T(0.5)));
  const Var<T> y0 = ops::sub(cy, ops::scale(h, T(0.5)));
  const Var<T> y1 = ops::add(cy, ops::scale(h, T(0.5)));
  const Var<T> gx0 = scalar(tape, gt.cx - gt.w / 2);
  const Var<T> gx1 = scalar(tape, gt.cx + gt.w / 2);
  const Var<T> gy0 = scalar(tape, gt.cy - gt.h / 2);
  const Var<T> gy1 = scalar(tape, gt.cy + gt.h / 2);

  const Var<T> inter = ops::mul(ops::relu(ops::sub(ops::minimum(x1, gx1), ops::maximum(x0, gx0))),
                                ops::relu(ops::sub(ops::minimum(y1, gy1), ops::maximum(y0, gy0))));
  const Var<T> uni = ops::sub(ops::add(ops::mul(w, h), scalar(tape, gt.w * gt.h)), inter);
  if (!(uni.value()[0] > T(0))) {
    return scalar(tape, 1.0);
  }
  const Var<T> hull = ops::mul(ops::sub(ops::maximum(x1, gx1), ops::minimum(x0, gx0)),
                               ops::sub(ops::maximum(y1, gy1), ops::minimum(y0, gy0)));
  const Var<T> giou = ops::sub(ops::div(inter, uni), ops::div(ops::sub(hull, uni), hull));
  return ops::add_scalar(ops::scale(giou, T(-1)), T(1));
}

template <typename T>
Var<T> focal_loss(const Var<T>& mask, std::span<const std::uint8_t> gt, double gamma, double alpha) {
  require_mask("focal_loss", mask, gt);
  const Tensor<T>& m = mask.value();
  const std::size_t n = m.size();
  std::vector<std::uint8_t> target(gt.begin(), gt.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(m[i]);
    const double pt = std::max(target[i] ? p : 1.0 - p, kMinProbability);
    const double at = target[i] ? alpha : 1.0 - alpha;
    total += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  const std::uint32_t im = mask.id();
  return mask.tape().record(
      Tensor<T>({1, 1}, static_cast<T>(total / static_cast<double>(n))), {mask},
      [im, n, gamma, alpha, target = std::move(target)](Tape<T>& tape, std::uint32_t self) {
        const double g = static_cast<double>(tape.grad(self)[0]) / static_cast<double>(n);
        const Tensor<T>& mv = tape.value(im);
        auto gm = tape.grad(im);
        for (std::size_t i = 0; i < n; ++i) {
          const double p = static_cast<double>(mv[i]);
          const double raw = target[i] ? p : 1.0 - p;
          if (raw < kMinProbability) {
            continue;
          }
          const double at = target[i] ? alpha : 1.0 - alpha;
          const double q = 1.0 - raw;
          // d/dp_t of −α_t q^γ log p_t, q = 1 − p_t.
          double d = -at * std::pow(q, gamma) / raw;
          if (gamma != 0.0 && q > 0.0) {
            d += at * gamma * std::pow(q, gamma - 1.0) * std::log(raw);
          }
          gm[i] += static_cast<T>(g * (target[i] ? d : -d));
        }
      });
}

template <typename T>
Var<T> dice_loss(const Var<T>& mask, std::span<const std::uint8_t> gt, double eps) {
  require_mask("dice_loss", mask, gt);
  if (!(eps > 0.0)) {
    throw ConfigError("dice smoothing must be positive");
  }
  const Tensor<T>& m = mask.value();
  std::vector<std::uint8_t> target(gt.begin(), gt.end());
  double inter = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    inter += target[i] ? static_cast<double>(m[i]) : 0.0;
    sum += static_cast<double>(m[i]) + target[i];
  }
  const double num = 2.0 * inter + eps;
  const double den = sum + eps;
  const std::uint32_t im = mask.id();
  return mask.tape().record(Tensor<T>({1, 1}, static_cast<T>(1.0 - num / den)), {mask},
                            [im, num, den, target = std::move(target)](Tape<T>& tape, std::uint32_t self) {
                              const double g = static_cast<double>(tape.grad(self)[0]);
                              auto gm = tape.grad(im);
                              for (std::size_t i = 0; i < gm.size(); ++i) {
                                const double d = -(2.0 * target[i] * den - num) / (den * den);
                                gm[i] += static_cast<T>(g * d);
                              }
                            });
}

template <typename T>
LossBundle<T> joint_loss(const Var<T>& box, const Var<T>& mask, const GroundTruth& gt, const LossConfig& cfg) {
  cfg.validate();
  LossBundle<T> b;
  b.smooth = smooth_l1_loss(box, gt.box);
  b.giou = giou_loss(box, gt.box);
  b.focal = focal_loss(mask, gt.mask, cfg.focal_gamma, cfg.focal_alpha);
  b.dice = dice_loss(mask, gt.mask, cfg.dice_eps);
  b.det = ops::add(b.smooth, b.giou);
  b.seg = ops::add(b.focal, b.dice);
  b.total = ops::add(ops::scale(b.det, static_cast<T>(cfg.lambda_det)), ops::scale(b.seg, static_cast<T>(cfg.lambda_seg)));
  return b;
}

#define EEVG_INSTANTIATE(T)                                                                                   \
  template LossValues loss_values(const LossBundle<T>&);                                                      \
  template Var<T> smooth_l1_loss(const Var<T>&, const BBox&);                                                 \
  template Var<T> giou_loss(const Var<T>&, const BBox&);                                                      \
  template Var<T> focal_loss(const Var<T>&, std::span<const std::uint8_t>, double, double);                   \
  template Var<T> dice_loss(const Var<T>&, std::span<const std::uint8_t>, double);                            \
  template LossBundle<T> joint_loss(const Var<T>&, const Var<T>&, const GroundTruth&, const LossConfig&);

EEVG_INSTANTIATE(float)
EEVG_INSTANTIATE(double)

#undef EEVG_INSTANTIATE

}  // namespace eevg
