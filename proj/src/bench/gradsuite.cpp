#include "eevg/bench/gradsuite.hpp"

#include <functional>

#include "eevg/losses/losses.hpp"
#include "eevg/model/model.hpp"
#include "eevg/numerics/params.hpp"

namespace eevg {

EEVGConfig micro_config() {
  EEVGConfig c;
  c.H = c.W = 16;
  c.P = 4;
  c.L_max = 4;
  c.C = 16;
  c.C_v = 12;
  c.C_l = 8;
  c.h = 2;
  c.D_layers = 2;
  c.D_ffn = 24;
  return c;
}

namespace {

using Op = std::function<Var<double>(std::vector<Var<double>>&)>;

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.data()) {
    v = rng.uniform(lo, hi);
  }
  return t;
}

// Fixed random weights turn any output into a scalar with no coordinate
// whose gradient is trivially zero.
Var<double> weighted_sum(const Var<double>& out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w(out.shape());
  for (double& v : w.data()) {
    v = rng.uniform(-1.0, 1.0);
  }
  return ops::sum(ops::mul(out, out.tape().constant(std::move(w))));
}

GradCheckReport check(std::vector<Tensor<double>> inputs, const Op& op, std::uint64_t seed, bool reduce = true) {
  std::vector<Tensor<double>*> params;
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    params.push_back(&t);
  }
  return gradient_check(
      [&](Tape<double>& tape) {
        std::vector<Var<double>> vars;
        for (auto& t : inputs) {
          vars.push_back(tape.parameter(t));
        }
        const Var<double> out = op(vars);
        return reduce ? weighted_sum(out, seed) : out;
      },
      params);
}

std::vector<std::uint8_t> random_mask(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> m(n);
  for (auto& v : m) {
    v = rng.below(3) == 0;
  }
  return m;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const std::vector<std::uint64_t>& seeds) {
  std::vector<GradSuiteEntry> out;
  for (std::uint64_t seed : seeds) {
    Rng rng(mix_seed(seed));
    auto add = [&](const std::string& name, std::vector<Tensor<double>> in, const Op& op, bool reduce = true) {
      out.push_back({name, seed, check(std::move(in), op, seed, reduce), false});
    };
    add("matmul", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5})},
        [](auto& v) { return ops::matmul(v[0], v[1]); });
    add("matmul_nt", {random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4})},
        [](auto& v) { return ops::matmul_nt(v[0], v[1]); });
    add("linear", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2}), random_tensor(rng, {1, 2})},
        [](auto& v) { return ops::linear(v[0], v[1], v[2]); });
    add("transpose", {random_tensor(rng, {3, 4})}, [](auto& v) { return ops::transpose(v[0]); });
    add("add", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, [](auto& v) { return ops::add(v[0], v[1]); });
    add("sub", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, [](auto& v) { return ops::sub(v[0], v[1]); });
    add("mul", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, [](auto& v) { return ops::mul(v[0], v[1]); });
    add("div", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3}, 0.5, 2.0)},
        [](auto& v) { return ops::div(v[0], v[1]); });
    add("minimum", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
        [](auto& v) { return ops::minimum(v[0], v[1]); });
    add("maximum", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
        [](auto& v) { return ops::maximum(v[0], v[1]); });
    add("add_row", {random_tensor(rng, {3, 4}), random_tensor(rng, {1, 4})},
        [](auto& v) { return ops::add_row(v[0], v[1]); });
    add("scale", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::scale(v[0], -1.7); });
    add("add_scalar", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::add_scalar(v[0], 0.3); });
    add("relu", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::relu(v[0]); });
    add("exp", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::exp(v[0]); });
    add("log", {random_tensor(rng, {2, 3}, 0.2, 3.0)}, [](auto& v) { return ops::log(v[0]); });
    add("sigmoid", {random_tensor(rng, {2, 3}, -4, 4)}, [](auto& v) { return ops::sigmoid(v[0]); });
    add("gelu", {random_tensor(rng, {2, 3}, -3, 3)}, [](auto& v) { return ops::gelu(v[0]); });
    add("smooth_l1", {random_tensor(rng, {2, 4}, -3, 3)}, [](auto& v) { return ops::smooth_l1(v[0]); });
    add("sum", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::sum(v[0]); });
    add("mean", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::mean(v[0]); });
    add("softmax_rows", {random_tensor(rng, {3, 5}, -3, 3)}, [](auto& v) { return ops::softmax_rows(v[0]); });
    const std::vector<std::uint8_t> column_mask{1, 0, 1, 1, 0};
    add("softmax_rows_masked", {random_tensor(rng, {3, 5}, -3, 3)},
        [&](auto& v) { return ops::softmax_rows(v[0], column_mask); });
    add("layer_norm", {random_tensor(rng, {3, 6}), random_tensor(rng, {1, 6}), random_tensor(rng, {1, 6})},
        [](auto& v) { return ops::layer_norm(v[0], v[1], v[2], 1e-5); });
    add("conv2d_1ch", {random_tensor(rng, {6, 7}), random_tensor(rng, {5, 5}), random_tensor(rng, {1, 1})},
        [](auto& v) { return ops::conv2d_1ch(v[0], v[1], v[2]); });
    add("slice_rows", {random_tensor(rng, {4, 3})}, [](auto& v) { return ops::slice_rows(v[0], 1, 2); });
    add("slice_cols", {random_tensor(rng, {4, 5})}, [](auto& v) { return ops::slice_cols(v[0], 2, 3); });
    add("concat_rows", {random_tensor(rng, {1, 3}), random_tensor(rng, {2, 3})},
        [](auto& v) { return ops::concat_rows(std::span<const Var<double>>(v)); });
    add("concat_cols", {random_tensor(rng, {2, 1}), random_tensor(rng, {2, 3})},
        [](auto& v) { return ops::concat_cols(std::span<const Var<double>>(v)); });
    const std::vector<std::size_t> gather_idx{4, 0, 4, 2};
    add("gather_rows", {random_tensor(rng, {5, 3})}, [&](auto& v) { return ops::gather_rows(v[0], gather_idx); });
    const std::vector<std::size_t> scatter_idx{3, 1};
    add("scatter_rows", {random_tensor(rng, {2, 3})}, [&](auto& v) { return ops::scatter_rows(v[0], scatter_idx, 5); });
    add("patches_to_image", {random_tensor(rng, {6, 4})}, [](auto& v) { return ops::patches_to_image(v[0], 2, 3, 2); });

    // Loss terms on a sigmoid-parameterized box and mask.
    const BBox gt_box{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.2, 0.5), rng.uniform(0.2, 0.5)};
    const std::vector<std::uint8_t> gt_mask = random_mask(rng, 24);
    add("smooth_l1_loss", {random_tensor(rng, {1, 4}, -1, 1)},
        [&](auto& v) { return smooth_l1_loss(ops::sigmoid(v[0]), gt_box); }, false);
    add("giou_loss", {random_tensor(rng, {1, 4}, -1, 1)},
        [&](auto& v) { return giou_loss(ops::sigmoid(v[0]), gt_box); }, false);
    add("focal_loss", {random_tensor(rng, {4, 6}, -3, 3)},
        [&](auto& v) { return focal_loss(ops::sigmoid(v[0]), gt_mask, 2.0, 0.25); }, false);
    add("dice_loss", {random_tensor(rng, {4, 6}, -3, 3)},
        [&](auto& v) { return dice_loss(ops::sigmoid(v[0]), gt_mask, 1.0); }, false);

    // Joint loss of the whole model, every parameter probed.
    const EEVGConfig cfg = micro_config();
    Rng model_rng = rng.fork(seed);
    ModelWeights<double> w = ModelWeights<double>::init(cfg, model_rng);
    const Tensor<double> visual = random_tensor(rng, {cfg.N(), cfg.C_v});
    const Tensor<double> text = random_tensor(rng, {cfg.L_max, cfg.C_l});
    const std::vector<std::uint8_t> pad = {1, 1, 1, 0};
    GroundTruth gt{gt_box, cfg.H, cfg.W, std::vector<std::uint8_t>(cfg.H * cfg.W, 0)};
    for (std::size_t r = 4; r < 10; ++r) {
      for (std::size_t c = 3; c < 9; ++c) {
        gt.mask[r * cfg.W + c] = 1;
      }
    }
    auto params = parameter_list<double>(w);
    for (auto* t : params) {
      t->set_requires_grad(true);
    }
    // Probes replay the base pass's token sets and record whether the live
    // threshold would have decided differently.
    Tape<double> base_tape(false);
    const auto base = eevg_forward(base_tape.constant(visual), base_tape.constant(text), pad, cfg, w);
    std::vector<TokenSet> replay;
    for (const auto& d : base.diagnostics.layers) {
      replay.push_back(d.after);
    }
    bool changed = false;
    const GradCheckReport model_report = gradient_check(
        [&](Tape<double>& tape) {
          const auto r = eevg_forward(tape.constant(visual), tape.constant(text), pad, cfg, w, replay);
          for (const auto& d : r.diagnostics.layers) {
            const TokenSet live = compose_index_maps(d.before, surviving_positions(d.normalized, cfg.alpha));
            changed = changed || !(live == d.after);
          }
          return joint_loss(r.prediction.box, r.prediction.mask.mask, gt, cfg.loss).total;
        },
        params, 1e-2, 1, FdScheme::richardson);
    out.push_back({"joint_loss_model", seed, model_report, changed});
  }
  return out;
}

}  // namespace eevg
