#include <cmath>
#include <numbers>

#include "doctest.h"
#include "eevg/numerics/optim.hpp"
#include "test_util.hpp"

using namespace eevg;
using eevg::testing::check_op;
using eevg::testing::random_tensor;

namespace {

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) {
        s += a(i, p) * b(p, j);
      }
      c(i, j) = s;
    }
  }
  return c;
}

constexpr double kFdTol = 1e-4;

}  // namespace

TEST_CASE("tensor rejects inconsistent construction") {
  CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>(Shape{0, 3}), DimensionError);
  Tensor<double> t({2, 3});
  t.set_requires_grad(true);
  CHECK(t.grad().size() == t.size());
}

TEST_CASE("matmul examples") {
  Tape<double> tape(false);
  auto id = tape.constant(Tensor<double>::matrix(2, 2, {1, 0, 0, 1}));
  auto a = tape.constant(Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
  auto b = tape.constant(Tensor<double>::matrix(2, 2, {5, 6, 7, 8}));

  CHECK(bitwise_equal(ops::matmul(id, a).value(), a.value()));

  // Oracle: hand arithmetic, 1·5+2·7 = 19, 1·6+2·8 = 22, 3·5+4·7 = 43, 3·6+4·8 = 50.
  const auto ab = ops::matmul(a, b).value();
  CHECK(ab(0, 0) == 19);
  CHECK(ab(0, 1) == 22);
  CHECK(ab(1, 0) == 43);
  CHECK(ab(1, 1) == 50);

  auto zero = tape.constant(Tensor<double>({2, 2}));
  for (double v : ops::matmul(zero, b).value().data()) {
    CHECK(v == 0.0);
  }

  auto wide = tape.constant(Tensor<double>({2, 3}));
  CHECK_THROWS_WITH_AS(ops::matmul(wide, wide), doctest::Contains("[2x3] and [2x3]"), DimensionError);
}

TEST_CASE("matmul properties on random 4x4 instances") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<double> tape(false);
    auto a = tape.constant(random_tensor(rng, {4, 4}));
    auto b = tape.constant(random_tensor(rng, {4, 4}));
    Tensor<double> eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) {
      eye(i, i) = 1.0;
    }
    auto id = tape.constant(eye);
    const auto ab = ops::matmul(a, b).value();
    const auto ref = naive_matmul(a.value(), b.value());
    const auto abt = ops::transpose(ops::matmul(a, b)).value();
    const auto bt_at = ops::matmul(ops::transpose(b), ops::transpose(a)).value();
    const auto ai = ops::matmul(a, id).value();
    const auto ia = ops::matmul(id, a).value();
    const auto nt = ops::matmul_nt(a, b).value();
    const auto nt_ref = naive_matmul(a.value(), ops::transpose(b).value());
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(ab[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      CHECK(std::abs(abt[i] - bt_at[i]) <= 1e-6);
      CHECK(std::abs(ai[i] - a.value()[i]) <= 1e-6);
      CHECK(std::abs(ia[i] - a.value()[i]) <= 1e-6);
      CHECK(std::abs(nt[i] - nt_ref[i]) <= 1e-12);
    }
  }
}

TEST_CASE("softmax_rows examples") {
  Tape<double> tape(false);
  const auto half = ops::softmax_rows(tape.constant(Tensor<double>::matrix(1, 2, {0, 0}))).value();
  CHECK(half[0] == doctest::Approx(0.5));
  CHECK(half[1] == doctest::Approx(0.5));

  // Oracle: e^{ln 2} / (e^{ln 2} + e^0) = 2 / 3.
  const auto thirds = ops::softmax_rows(tape.constant(Tensor<double>::matrix(1, 2, {std::numbers::ln2, 0}))).value();
  CHECK(thirds[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(thirds[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const auto big = ops::softmax_rows(tape.constant(Tensor<double>::matrix(1, 2, {1000, 0}))).value();
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] == doctest::Approx(0.0));
}

TEST_CASE("softmax_rows masks columns and rejects a fully masked row") {
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>::matrix(1, 3, {0.3, 5.0, -1.0}));
  const std::vector<std::uint8_t> mask{1, 0, 1};
  const auto y = ops::softmax_rows(x, mask).value();
  CHECK(y[1] == 0.0);
  CHECK(y[0] + y[2] == doctest::Approx(1.0));
  const std::vector<std::uint8_t> none{0, 0, 0};
  CHECK_THROWS_AS(ops::softmax_rows(x, none), PreconditionError);
}

TEST_CASE("softmax_rows sums to one and is shift invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tape<double> tape(false);
    auto x = random_tensor(rng, {3, 7}, -20, 20);
    auto shifted = x;
    for (std::size_t i = 0; i < 3; ++i) {
      const double c = rng.uniform(-100, 100);
      for (std::size_t j = 0; j < 7; ++j) {
        shifted(i, j) += c;
      }
    }
    const auto y = ops::softmax_rows(tape.constant(x)).value();
    const auto ys = ops::softmax_rows(tape.constant(shifted)).value();
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(y(i, j) >= 0.0);
        CHECK(std::abs(y(i, j) - ys(i, j)) <= 1e-6);
        s += y(i, j);
      }
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("layer_norm examples") {
  Tape<double> tape(false);
  auto ones = tape.constant(Tensor<double>({1, 2}, 1.0));
  auto zeros = tape.constant(Tensor<double>({1, 2}, 0.0));
  const auto y = ops::layer_norm(tape.constant(Tensor<double>::matrix(1, 2, {1, -1})), ones, zeros, 1e-5).value();
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-4));

  auto beta = tape.constant(Tensor<double>::matrix(1, 3, {0.25, -0.5, 2.0}));
  auto gamma3 = tape.constant(Tensor<double>({1, 3}, 1.0));
  const auto c = ops::layer_norm(tape.constant(Tensor<double>({2, 3}, 4.2)), gamma3, beta, 1e-5).value();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(c(i, j) == doctest::Approx(beta.value()[j]));
    }
  }

  Rng rng(3);
  auto gamma0 = tape.constant(Tensor<double>({1, 3}, 0.0));
  const auto z = ops::layer_norm(tape.constant(random_tensor(rng, {4, 3})), gamma0, beta, 1e-5).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(z(i, j) == beta.value()[j]);
    }
  }
  CHECK_THROWS_AS(ops::layer_norm(ones, ones, zeros, 0.0), ConfigError);
}

TEST_CASE("conv2d_1ch examples") {
  Tape<double> tape(false);
  Rng rng(5);
  auto x = tape.constant(random_tensor(rng, {6, 7}));
  auto zero_bias = tape.constant(Tensor<double>({1, 1}, 0.0));
  Tensor<double> delta({5, 5});
  delta(2, 2) = 1.0;
  CHECK(bitwise_equal(ops::conv2d_1ch(x, tape.constant(delta), zero_bias).value(), x.value()));

  const auto nine = ops::conv2d_1ch(tape.constant(Tensor<double>({4, 4}, 1.0)), tape.constant(Tensor<double>({3, 3}, 1.0)),
                                    zero_bias)
                        .value();
  CHECK(nine(1, 1) == 9.0);
  CHECK(nine(2, 2) == 9.0);
  CHECK(nine(0, 0) == 4.0);
  CHECK(nine(3, 3) == 4.0);
  CHECK(nine(0, 1) == 6.0);

  auto b = tape.constant(Tensor<double>({1, 1}, -0.75));
  for (double v : ops::conv2d_1ch(tape.constant(Tensor<double>({5, 5})), tape.constant(random_tensor(rng, {3, 3})), b)
                      .value()
                      .data()) {
    CHECK(v == -0.75);
  }
  CHECK_THROWS_AS(ops::conv2d_1ch(x, tape.constant(Tensor<double>({4, 4})), zero_bias), ConfigError);
}

TEST_CASE("gradient_check examples") {
  Tensor<double> x({1, 1}, 3.0);
  x.set_requires_grad(true);
  std::vector<Tensor<double>*> params{&x};
  const auto sq = gradient_check(
      [&](Tape<double>& tape) {
        auto v = tape.parameter(x);
        return ops::sum(ops::mul(v, v));
      },
      params);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(sq.max_rel_error < 1e-6);

  Rng rng(1);
  Tensor<double> s = random_tensor(rng, {3, 4});
  s.set_requires_grad(true);
  std::vector<Tensor<double>*> sp{&s};
  const auto constant = gradient_check([&](Tape<double>& tape) { return ops::sum(ops::softmax_rows(tape.parameter(s))); },
                                       sp, 1e-3);
  for (double g : s.grad()) {
    CHECK(std::abs(g) < 1e-12);
  }
  CHECK(constant.max_rel_error <= 1e-4);

  CHECK_THROWS_AS(gradient_check([&](Tape<double>& tape) { return ops::log(ops::scale(tape.parameter(x), -1.0)); }, params),
                  NumericError);
}

TEST_CASE("every primitive matches central differences over five seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 101);
    CAPTURE(seed);
    std::vector<Tensor<double>> in;
    auto run = [&](const char* name, std::vector<Tensor<double>> inputs, const eevg::testing::VarFn& op) {
      CAPTURE(name);
      const auto r = check_op(inputs, op, seed);
      CHECK(r.max_rel_error <= kFdTol);
    };
    run("matmul", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5})},
        [](auto& v) { return ops::matmul(v[0], v[1]); });
    run("matmul_nt", {random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4})},
        [](auto& v) { return ops::matmul_nt(v[0], v[1]); });
    run("linear", {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2}), random_tensor(rng, {1, 2})},
        [](auto& v) { return ops::linear(v[0], v[1], v[2]); });
    run("transpose", {random_tensor(rng, {3, 4})}, [](auto& v) { return ops::transpose(v[0]); });
    run("add", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, [](auto& v) { return ops::add(v[0], v[1]); });
    run("sub", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, [](auto& v) { return ops::sub(v[0], v[1]); });
    run("mul", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}, [](auto& v) { return ops::mul(v[0], v[1]); });
    run("div", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3}, 0.5, 2.0)},
        [](auto& v) { return ops::div(v[0], v[1]); });
    run("minimum", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
        [](auto& v) { return ops::minimum(v[0], v[1]); });
    run("maximum", {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
        [](auto& v) { return ops::maximum(v[0], v[1]); });
    run("add_row", {random_tensor(rng, {3, 4}), random_tensor(rng, {1, 4})},
        [](auto& v) { return ops::add_row(v[0], v[1]); });
    run("scale", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::scale(v[0], -1.7); });
    run("add_scalar", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::add_scalar(v[0], 0.3); });
    run("relu", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::relu(v[0]); });
    run("exp", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::exp(v[0]); });
    run("log", {random_tensor(rng, {2, 3}, 0.2, 3.0)}, [](auto& v) { return ops::log(v[0]); });
    run("sigmoid", {random_tensor(rng, {2, 3}, -4, 4)}, [](auto& v) { return ops::sigmoid(v[0]); });
    run("gelu", {random_tensor(rng, {2, 3}, -3, 3)}, [](auto& v) { return ops::gelu(v[0]); });
    run("smooth_l1", {random_tensor(rng, {2, 4}, -3, 3)}, [](auto& v) { return ops::smooth_l1(v[0]); });
    run("sum", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::sum(v[0]); });
    run("mean", {random_tensor(rng, {2, 3})}, [](auto& v) { return ops::mean(v[0]); });
    run("softmax_rows", {random_tensor(rng, {3, 5}, -3, 3)}, [](auto& v) { return ops::softmax_rows(v[0]); });
    run("softmax_rows masked", {random_tensor(rng, {3, 5}, -3, 3)}, [](auto& v) {
      static const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
      return ops::softmax_rows(v[0], mask);
    });
    run("layer_norm", {random_tensor(rng, {3, 6}), random_tensor(rng, {1, 6}), random_tensor(rng, {1, 6})},
        [](auto& v) { return ops::layer_norm(v[0], v[1], v[2], 1e-5); });
    run("conv2d_1ch", {random_tensor(rng, {6, 7}), random_tensor(rng, {5, 5}), random_tensor(rng, {1, 1})},
        [](auto& v) { return ops::conv2d_1ch(v[0], v[1], v[2]); });
    run("slice_rows", {random_tensor(rng, {4, 3})}, [](auto& v) { return ops::slice_rows(v[0], 1, 2); });
    run("slice_cols", {random_tensor(rng, {4, 5})}, [](auto& v) { return ops::slice_cols(v[0], 2, 3); });
    run("concat_rows", {random_tensor(rng, {1, 3}), random_tensor(rng, {2, 3})}, [](auto& v) {
      return ops::concat_rows(std::span<const Var<double>>(v));
    });
    run("concat_cols", {random_tensor(rng, {2, 1}), random_tensor(rng, {2, 3})}, [](auto& v) {
      return ops::concat_cols(std::span<const Var<double>>(v));
    });
    run("gather_rows", {random_tensor(rng, {5, 3})}, [](auto& v) {
      static const std::vector<std::size_t> idx{4, 0, 4, 2};
      return ops::gather_rows(v[0], idx);
    });
    run("scatter_rows", {random_tensor(rng, {2, 3})}, [](auto& v) {
      static const std::vector<std::size_t> idx{3, 1};
      return ops::scatter_rows(v[0], idx, 5);
    });
    run("patches_to_image", {random_tensor(rng, {6, 4})},
        [](auto& v) { return ops::patches_to_image(v[0], 2, 3, 2); });
  }
}

TEST_CASE("patches_to_image places tiles row-major") {
  Tape<double> tape(false);
  Tensor<double> patches({4, 4});
  for (std::size_t i = 0; i < 16; ++i) {
    patches[i] = static_cast<double>(i);
  }
  const auto img = ops::patches_to_image(tape.constant(patches), 2, 2, 2).value();
  // Patch 3 (bottom-right) holds 12 13 / 14 15.
  CHECK(img(2, 2) == 12);
  CHECK(img(2, 3) == 13);
  CHECK(img(3, 2) == 14);
  CHECK(img(3, 3) == 15);
  CHECK(img(0, 2) == 4);
  CHECK(img(1, 1) == 3);
}

TEST_CASE("adamw examples") {
  Tensor<double> p({1, 3}, 0.5);
  p.set_requires_grad(true);
  std::vector<Tensor<double>*> params{&p};

  OptimState<double> still({.lr = 0.1, .weight_decay = 0.0});
  adamw_step<double>(params, still);
  for (double v : p.data()) {
    CHECK(v == 0.5);
  }

  for (double& g : p.grad()) {
    g = 1.0;
  }
  OptimState<double> one({.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0});
  adamw_step<double>(params, one);
  // m̂ = v̂ = 1 after bias correction, so the step is lr / (1 + eps).
  for (double v : p.data()) {
    CHECK(v == doctest::Approx(0.5 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  CHECK(one.step == 1);

  Tensor<double> q({2, 2}, 2.0);
  q.set_requires_grad(true);
  std::vector<Tensor<double>*> qp{&q};
  OptimState<double> decay({.lr = 0.01, .weight_decay = 0.5});
  adamw_step<double>(qp, decay);
  adamw_step<double>(qp, decay);
  CHECK(decay.step == 2);
  for (double v : q.data()) {
    CHECK(v == doctest::Approx(2.0 * (1 - 0.005) * (1 - 0.005)));
  }

  std::vector<Tensor<double>*> wrong{&q, &p};
  CHECK_THROWS_AS(adamw_step<double>(wrong, decay), DimensionError);
}

TEST_CASE("rng is reproducible") {
  Rng a(42);
  Rng b(42);
  Rng c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(7) < 7);
  }
}
