#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "eevg/fusion/flops.hpp"
#include "eevg/fusion/layers.hpp"
#include "test_util.hpp"

using namespace eevg;
using eevg::testing::random_tensor;

namespace {

Tensor<double> eye(std::size_t n) {
  Tensor<double> t({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    t(i, i) = 1.0;
  }
  return t;
}

AttentionParams<double> identity_attention(std::size_t c, std::size_t heads) {
  AttentionParams<double> p;
  p.heads = heads;
  p.wq = p.wk = p.wv = p.wo = eye(c);
  p.bq = p.bk = p.bv = p.bo = Tensor<double>({1, c});
  return p;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

Tensor<double> layer_norm_rows(const Tensor<double>& x) {
  Tensor<double> y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      mean += x(r, c);
    }
    mean /= static_cast<double>(x.cols());
    double var = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      var += (x(r, c) - mean) * (x(r, c) - mean);
    }
    var /= static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
      y(r, c) = (x(r, c) - mean) / std::sqrt(var + kLayerNormEps);
    }
  }
  return y;
}

Tensor<double> rows_of(const Tensor<double>& x, const std::vector<std::size_t>& order) {
  Tensor<double> y({order.size(), x.cols()});
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      y(i, c) = x(order[i], c);
    }
  }
  return y;
}

}  // namespace

TEST_CASE("self-attention with a single visual token returns its value row") {
  Tape<double> tape(false);
  auto p = identity_attention(4, 1);
  // Location token equal to the visual token: both keys get the same logit,
  // so every query attends 50/50 to two identical value rows.
  auto x = tape.constant(Tensor<double>::matrix(2, 4, {0.3, -0.2, 0.1, 0.5, 0.3, -0.2, 0.1, 0.5}));
  auto r = multi_head_self_attention(x, p);
  CHECK(max_abs_diff(r.out.value(), x.value()) < 1e-12);
  CHECK(r.loc_scores.shape() == Shape{1, 1});
  CHECK(r.loc_scores[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(multi_head_self_attention(ops::slice_rows(x, 0, 1), p), DimensionError);
}

TEST_CASE("attention rejects head counts that do not divide the channels") {
  Rng rng(1);
  CHECK_THROWS_AS(AttentionParams<double>::init(6, 4, rng), ConfigError);
  CHECK_THROWS_AS(AttentionParams<double>::init(6, 0, rng), ConfigError);
  CHECK_NOTHROW(AttentionParams<double>::init(6, 3, rng));
}

TEST_CASE("location scores are nonnegative and sum to at most one per head") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = AttentionParams<double>::init(8, 2, rng);
    Tape<double> tape(false);
    auto x = tape.constant(random_tensor(rng, {7, 8}, -2.0, 2.0));
    auto r = multi_head_self_attention(x, p);
    REQUIRE(r.loc_scores.shape() == Shape{2, 6});
    for (std::size_t h = 0; h < 2; ++h) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(r.loc_scores(h, j) >= 0.0);
        s += r.loc_scores(h, j);
      }
      CHECK(s <= 1.0 + 1e-12);
      CHECK(s < 1.0);
    }
  }
}

TEST_CASE("self-attention is equivariant to visual-token permutations") {
  Rng rng(5);
  auto p = AttentionParams<double>::init(8, 2, rng);
  Tape<double> tape(false);
  const Tensor<double> x = random_tensor(rng, {6, 8});
  const auto base = multi_head_self_attention(tape.constant(x), p);

  std::vector<std::size_t> perm = {0, 1, 2, 3, 4};
  int checked = 0;
  do {
    std::vector<std::size_t> order = {0};
    for (std::size_t q : perm) {
      order.push_back(q + 1);
    }
    const auto r = multi_head_self_attention(tape.constant(rows_of(x, order)), p);
    CHECK(max_abs_diff(r.out.value(), rows_of(base.out.value(), order)) < 1e-12);
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(std::abs(r.loc_scores(h, j) - base.loc_scores(h, perm[j])) < 1e-12);
      }
    }
    ++checked;
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(checked == 120);
}

TEST_CASE("cross-attention examples") {
  Rng rng(3);
  Tape<double> tape(false);
  auto p = identity_attention(4, 2);
  auto q = tape.constant(random_tensor(rng, {3, 4}));

  SUBCASE("single memory token") {
    auto m = tape.constant(Tensor<double>::matrix(1, 4, {0.7, -0.1, 0.2, 0.4}));
    const auto out = multi_head_cross_attention<double>(q, m, {}, p).value();
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(out(r, c) == doctest::Approx(m.value()(0, c)).epsilon(1e-14));
      }
    }
  }

  SUBCASE("zero memory gives zero output") {
    auto m = tape.constant(Tensor<double>({5, 4}));
    for (double v : multi_head_cross_attention<double>(q, m, {}, p).value().data()) {
      CHECK(v == 0.0);
    }
  }

  SUBCASE("fully masked memory is rejected") {
    auto m = tape.constant(random_tensor(rng, {2, 4}));
    const std::vector<std::uint8_t> none = {0, 0};
    const std::vector<std::uint8_t> short_mask = {1};
    CHECK_THROWS_AS(multi_head_cross_attention<double>(q, m, none, p), PreconditionError);
    CHECK_THROWS_AS(multi_head_cross_attention<double>(q, m, short_mask, p), DimensionError);
  }
}

TEST_CASE("masking a memory token equals deleting it") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = AttentionParams<double>::init(8, 2, rng);
    Tape<double> tape(false);
    auto q = tape.constant(random_tensor(rng, {4, 8}));
    const Tensor<double> mem = random_tensor(rng, {5, 8});
    std::vector<std::uint8_t> mask(5, 1);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < 5; ++i) {
      mask[i] = rng.below(2) == 0 ? 0 : 1;
    }
    mask[rng.below(5)] = 1;
    for (std::size_t i = 0; i < 5; ++i) {
      if (mask[i]) {
        kept.push_back(i);
      }
    }
    const auto masked = multi_head_cross_attention<double>(q, tape.constant(mem), mask, p).value();
    const auto deleted = multi_head_cross_attention<double>(q, tape.constant(rows_of(mem, kept)), {}, p).value();
    CHECK(max_abs_diff(masked, deleted) < 1e-6);
  }
}

TEST_CASE("decoder layer contract") {
  Rng rng(23);
  const std::size_t c = 8;
  auto w = LayerWeights<double>::init(c, 2, 16, rng);
  Tape<double> tape(false);
  FusionState<double> s;
  s.tokens = tape.constant(random_tensor(rng, {6, c}));
  s.memory = tape.constant(random_tensor(rng, {3, c}));
  s.memory_mask = {1, 1, 0};
  s.token_set = TokenSet::all(5);

  const auto r = decoder_layer_forward(s, w);
  CHECK(r.state.tokens.shape() == s.tokens.shape());
  CHECK(r.state.memory.id() == s.memory.id());
  CHECK(r.state.token_set == s.token_set);
  REQUIRE(r.loc_scores.shape() == Shape{1, 5});
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(r.loc_scores[j] >= 0.0);
    CHECK(r.loc_scores[j] <= 1.0);
    CHECK(r.loc_scores[j] == doctest::Approx(0.5 * (r.loc_scores_per_head(0, j) + r.loc_scores_per_head(1, j))));
  }

  SUBCASE("zeroed output projections reduce the layer to three layer norms") {
    for (auto* t : {&w.msa.wo, &w.mca.wo, &w.ffn.w2}) {
      t->fill(0.0);
    }
    const auto z = decoder_layer_forward(s, w);
    // Oracle: with every branch at zero the layer is LN(LN(LN(x))).
    const auto expected = layer_norm_rows(layer_norm_rows(layer_norm_rows(s.tokens.value())));
    CHECK(max_abs_diff(z.state.tokens.value(), expected) < 1e-9);
  }
}

TEST_CASE("encoder layer matches a decoder layer without cross-attention when L = 0") {
  Rng rng(29);
  const std::size_t c = 8;
  auto dec = LayerWeights<double>::init(c, 2, 12, rng);
  EncoderLayerWeights<double> enc;
  enc.msa = dec.msa;
  enc.ffn = dec.ffn;
  enc.ln1 = dec.ln1;
  // Make the LN parameters distinguishable so a swapped LN would show up.
  for (double& v : dec.ln3.gamma.data()) {
    v = rng.uniform(0.5, 1.5);
  }
  enc.ln2 = dec.ln3;

  Tape<double> tape(false);
  const Tensor<double> x = random_tensor(rng, {7, c});
  FusionState<double> s{tape.constant(x), {}, {}, TokenSet::all(6)};
  const auto d = decoder_layer_forward(s, dec).state.tokens.value();
  const auto e = encoder_layer_forward(tape.constant(x), enc).value();
  CHECK(e.shape() == x.shape());
  CHECK(max_abs_diff(d, e) < 1e-12);
}

TEST_CASE("encoder layer gradient check on six tokens") {
  Rng rng(31);
  const std::size_t c = 6;
  auto w = EncoderLayerWeights<double>::init(c, 2, 8, rng);
  for (auto* t : {&w.ln1.beta, &w.ln2.beta, &w.msa.bq, &w.ffn.b1}) {
    for (double& v : t->data()) {
      v = rng.uniform(-0.3, 0.3);
    }
  }
  Tensor<double> x = random_tensor(rng, {6, c});
  std::vector<Tensor<double>*> params = {&x};
  w.visit("", [&](const std::string&, Tensor<double>& t) { params.push_back(&t); });
  for (auto* t : params) {
    t->set_requires_grad(true);
  }
  const auto report = gradient_check(
      [&](Tape<double>& tape) { return testing::weighted_sum(encoder_layer_forward(tape.parameter(x), w), 77); },
      params, 1e-2, 1, FdScheme::richardson);
  INFO("worst param ", report.worst_param, " index ", report.worst_index, " analytic ", report.analytic, " numeric ",
       report.numeric);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("decoder layer gradient check") {
  Rng rng(37);
  const std::size_t c = 6;
  auto w = LayerWeights<double>::init(c, 2, 8, rng);
  Tensor<double> x = random_tensor(rng, {5, c});
  Tensor<double> mem = random_tensor(rng, {3, c});
  std::vector<Tensor<double>*> params = {&x, &mem};
  w.visit("", [&](const std::string&, Tensor<double>& t) { params.push_back(&t); });
  for (auto* t : params) {
    t->set_requires_grad(true);
  }
  const std::vector<std::uint8_t> mask = {1, 0, 1};
  const auto report = gradient_check(
      [&](Tape<double>& tape) {
        FusionState<double> s{tape.parameter(x), tape.parameter(mem), mask, TokenSet::all(4)};
        return testing::weighted_sum(decoder_layer_forward(s, w).state.tokens, 41);
      },
      params, 1e-2, 1, FdScheme::richardson);
  INFO("worst param ", report.worst_param, " index ", report.worst_index, " analytic ", report.analytic, " numeric ",
       report.numeric);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("sub-layer outputs stay finite for large inputs") {
  Rng rng(43);
  const std::size_t c = 8;
  auto w = LayerWeights<double>::init(c, 2, 16, rng);
  auto e = EncoderLayerWeights<double>::init(c, 2, 16, rng);
  Tape<double> tape(false);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = tape.constant(random_tensor(rng, {9, c}, -1e3, 1e3));
    auto m = tape.constant(random_tensor(rng, {4, c}, -1e3, 1e3));
    CHECK(multi_head_self_attention(x, w.msa).out.value().all_finite());
    CHECK(multi_head_cross_attention<double>(x, m, {}, w.mca).value().all_finite());
    CHECK(feed_forward(x, w.ffn).value().all_finite());
    FusionState<double> s{x, m, {}, TokenSet::all(8)};
    CHECK(decoder_layer_forward(s, w).state.tokens.value().all_finite());
    CHECK(encoder_layer_forward(x, e).value().all_finite());
  }
}

TEST_CASE("analytic fusion flops") {
  const std::size_t c = 768;
  const auto ffn = matched_ffn_dims(c);
  CHECK(ffn.decoder == 1024);
  CHECK(ffn.encoder == 2048);

  auto dec = [&](std::size_t n, std::size_t l) {
    return decoder_fusion_flops({n, l, c, ffn.decoder, 3});
  };
  auto enc = [&](std::size_t n, std::size_t l) {
    return encoder_fusion_flops({n, l, c, ffn.encoder, 3});
  };
  const double dec_ratio = dec(196, 300) / dec(196, 60);
  const double enc_ratio = enc(196, 300) / enc(196, 60);
  CHECK(dec_ratio < enc_ratio);

  // Decoder cost is affine in L at fixed N.
  const double step = dec(196, 2) - dec(196, 1);
  for (std::size_t l = 2; l < 50; ++l) {
    CHECK(dec(196, l + 1) - dec(196, l) == doctest::Approx(step).epsilon(1e-12));
  }

  for (std::size_t n : {16, 64, 196}) {
    for (std::size_t l = 1; l <= 1024; l *= 2) {
      CHECK(dec(n, l) <= enc(n, l));
    }
  }
}
