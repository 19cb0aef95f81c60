#include <cmath>
#include <numbers>

#include "doctest.h"
#include "eevg/losses/losses.hpp"
#include "test_util.hpp"

using namespace eevg;
using eevg::testing::random_tensor;

namespace {

Var<double> box_var(Tape<double>& tape, const BBox& b) {
  return tape.constant(Tensor<double>::matrix(1, 4, {b.cx, b.cy, b.w, b.h}));
}

double eval_giou(const BBox& a, const BBox& b) {
  Tape<double> tape(false);
  return giou_loss(box_var(tape, a), b).value()[0];
}

BBox from_corners(double x0, double y0, double x1, double y1) {
  return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

double eval_focal(std::vector<double> m, std::vector<std::uint8_t> gt, double gamma = 2.0, double alpha = 0.25) {
  Tape<double> tape(false);
  const std::size_t n = m.size();
  return focal_loss(tape.constant(Tensor<double>({1, n}, std::move(m))), gt, gamma, alpha).value()[0];
}

double eval_dice(std::vector<double> m, std::vector<std::uint8_t> gt, double eps) {
  Tape<double> tape(false);
  const std::size_t n = m.size();
  return dice_loss(tape.constant(Tensor<double>({1, n}, std::move(m))), gt, eps).value()[0];
}

}  // namespace

TEST_CASE("smooth L1 examples") {
  Tape<double> tape(false);
  const BBox gt{0.4, 0.5, 0.2, 0.3};
  CHECK(smooth_l1_loss(box_var(tape, gt), gt).value()[0] == 0.0);
  CHECK(smooth_l1_loss(box_var(tape, {0.9, 0.5, 0.2, 0.3}), gt).value()[0] == doctest::Approx(0.03125));
  CHECK(smooth_l1_loss(box_var(tape, {2.4, 0.5, 0.2, 0.3}), gt).value()[0] == doctest::Approx(0.375));
}

TEST_CASE("GIoU examples") {
  const BBox a{0.4, 0.5, 0.2, 0.3};
  CHECK(eval_giou(a, a) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(eval_giou(from_corners(0, 0, 1, 1), from_corners(1, 1, 2, 2)) - 1.5) <= 1e-9);
  CHECK(eval_giou(from_corners(0, 0, 1, 0.5), from_corners(0, 0, 1, 1)) == doctest::Approx(0.5));
  CHECK(eval_giou({0.2, 0.2, 0.0, 0.0}, {0.7, 0.7, 0.0, 0.0}) == 1.0);
}

TEST_CASE("GIoU is invariant to joint translation and scaling") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const BBox a{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
    const BBox b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
    const double base = eval_giou(a, b);
    CHECK(base >= 0.0);
    CHECK(base <= 2.0);
    const double dx = rng.uniform(-3, 3);
    const double dy = rng.uniform(-3, 3);
    const double s = rng.uniform(0.2, 5.0);
    const BBox at{a.cx + dx, a.cy + dy, a.w, a.h};
    const BBox bt{b.cx + dx, b.cy + dy, b.w, b.h};
    const BBox as{a.cx * s, a.cy * s, a.w * s, a.h * s};
    const BBox bs{b.cx * s, b.cy * s, b.w * s, b.h * s};
    CHECK(std::abs(eval_giou(at, bt) - base) <= 1e-6);
    CHECK(std::abs(eval_giou(as, bs) - base) <= 1e-6);
  }
}

TEST_CASE("focal loss examples") {
  CHECK(eval_focal({0.5}, {1}) == doctest::Approx(0.25 * 0.25 * std::numbers::ln2));
  CHECK(eval_focal({1.0 - 1e-9, 1e-9}, {1, 0}) < 1e-15);

  // γ = 0, α_f = 0.5 is half the mean binary cross-entropy.
  const std::vector<double> m = {0.1, 0.7, 0.4, 0.95};
  const std::vector<std::uint8_t> gt = {0, 1, 1, 0};
  double bce = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    bce += -(gt[i] ? std::log(m[i]) : std::log(1.0 - m[i]));
  }
  CHECK(eval_focal(m, gt, 0.0, 0.5) == doctest::Approx(0.5 * bce / 4.0));
}

TEST_CASE("focal loss decreases monotonically in p_t") {
  double prev = INFINITY;
  for (int i = 1; i <= 100; ++i) {
    const double pt = i / 101.0;
    const double pos = eval_focal({pt}, {1});
    const double neg = eval_focal({1.0 - pt}, {0});
    CHECK(pos < prev);
    CHECK(pos >= 0.0);
    CHECK(neg >= 0.0);
    prev = pos;
  }
}

TEST_CASE("dice loss examples") {
  CHECK(eval_dice({1, 0, 1, 1}, {1, 0, 1, 1}, 1.0) == 0.0);
  CHECK(eval_dice({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}, 1e-12) == doctest::Approx(0.5));
  CHECK(eval_dice({0, 0, 0, 0}, {0, 0, 0, 0}, 1.0) == 0.0);
  CHECK(eval_dice({0.2, 0.9}, {0, 1}, 1.0) > 0.0);
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  CHECK(cfg.lambda_det == 0.1);
  CHECK(cfg.lambda_seg == 1.0);
  CHECK_NOTHROW(cfg.validate());
  cfg.focal_alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.dice_eps = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda_det = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("joint loss bundle") {
  Rng rng(9);
  GroundTruth gt{{0.5, 0.4, 0.3, 0.2}, 3, 3, {0, 1, 0, 1, 1, 0, 0, 0, 1}};
  Tape<double> tape(false);
  const auto box = box_var(tape, {0.45, 0.42, 0.25, 0.3});
  const auto mask = tape.constant(random_tensor(rng, {3, 3}, 0.05, 0.95));

  LossConfig cfg;
  const auto v = loss_values(joint_loss(box, mask, gt, cfg));
  CHECK(v.det == doctest::Approx(v.smooth + v.giou));
  CHECK(v.seg == doctest::Approx(v.focal + v.dice));
  CHECK(v.total == doctest::Approx(0.1 * v.det + 1.0 * v.seg));

  cfg.lambda_det = 0.0;
  const auto z = loss_values(joint_loss(box, mask, gt, cfg));
  CHECK(z.total == doctest::Approx(z.seg));

  Tensor<double> perfect({3, 3});
  for (std::size_t i = 0; i < 9; ++i) {
    perfect[i] = gt.mask[i] ? 1.0 - 1e-12 : 1e-12;
  }
  const auto p = loss_values(joint_loss(box_var(tape, gt.box), tape.constant(perfect), gt, LossConfig{}));
  CHECK(p.total == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(joint_loss(box, tape.constant(Tensor<double>({2, 2}, 0.5)), gt, LossConfig{}), DimensionError);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(13);
  const GroundTruth gt{{0.5, 0.45, 0.3, 0.25}, 4, 4, {0, 0, 1, 1, 0, 1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1}};
  for (int seed = 0; seed < 5; ++seed) {
    Tensor<double> box = Tensor<double>::matrix(
        1, 4, {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)});
    Tensor<double> mask = random_tensor(rng, {4, 4}, 0.05, 0.95);
    box.set_requires_grad(true);
    mask.set_requires_grad(true);
    std::vector<Tensor<double>*> params = {&box, &mask};
    const auto report = gradient_check(
        [&](Tape<double>& tape) { return joint_loss(tape.parameter(box), tape.parameter(mask), gt, LossConfig{}).total; },
        params, 1e-6);
    CHECK(report.max_rel_error <= 1e-4);
  }
}
