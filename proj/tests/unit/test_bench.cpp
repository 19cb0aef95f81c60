#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "eevg/bench/gradsuite.hpp"
#include "eevg/bench/render.hpp"
#include "eevg/bench/scaling.hpp"
#include "eevg/bench/training.hpp"
#include "eevg/model/serialize.hpp"
#include "eevg/numerics/pgm.hpp"

using namespace eevg;

namespace {

EEVGConfig tiny_config() {
  EEVGConfig c;
  c.H = c.W = 32;
  c.P = 8;
  c.L_max = 4;
  c.C = 32;
  c.C_v = 16;
  c.C_l = 8;
  c.h = 2;
  c.D_layers = 2;
  c.D_ffn = 43;
  c.epochs = 8;
  c.lr = 3e-3;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

SamplePrediction perfect(const SynthSample& s) {
  SamplePrediction p;
  p.box = s.gt.box;
  p.mask.assign(s.gt.mask.begin(), s.gt.mask.end());
  p.diagnostics.final_tokens = TokenSet::all(4);
  return p;
}

}  // namespace

TEST_CASE("least-squares fits") {
  const std::vector<double> l = {64, 128, 256, 512, 1024};
  std::vector<double> line, quad, flat;
  for (double x : l) {
    line.push_back(2 + 3 * x);
    quad.push_back(1 + 0.5 * (196 + x) * (196 + x));
    flat.push_back(7.0);
  }
  const FitReport f = fit_line(l, line);
  CHECK(f.a == doctest::Approx(2.0));
  CHECK(f.b == doctest::Approx(3.0));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));

  BenchResult r;
  for (std::size_t i = 0; i < l.size(); ++i) {
    r.rows.push_back({FusionKind::encoder, 196, std::size_t(l[i]), 8, 1, quad[i], 0.0, 0.0});
    r.rows.push_back({FusionKind::decoder, 196, std::size_t(l[i]), 8, 1, flat[i], 0.0, 0.0});
  }
  const auto fits = fit_complexity(r);
  REQUIRE(fits.size() == 2);
  CHECK(fits[0].kind == FusionKind::encoder);
  CHECK(fits[0].quadratic.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fits[0].quadratic.b == doctest::Approx(0.5));
  CHECK(fits[0].linear.r2 < fits[0].quadratic.r2);
  CHECK(fits[1].linear.zero_variance);
  CHECK(fits[1].linear.r2 == 0.0);
  CHECK(std::abs(fits[1].linear.b) < 1e-12);

  BenchResult few;
  few.rows.assign(r.rows.begin(), r.rows.begin() + 6);
  CHECK_THROWS_AS(fit_complexity(few), PreconditionError);
}

TEST_CASE("scaling benchmark rows and CSV") {
  BenchOptions opt;
  opt.N = 16;
  opt.C = 24;
  opt.heads = 2;
  opt.layers = 2;
  opt.L_list = {12, 4, 8, 16};
  opt.reps = 9;
  const BenchResult a = bench_fusion_scaling({FusionKind::decoder, FusionKind::encoder}, opt);
  const BenchResult b = bench_fusion_scaling({FusionKind::decoder, FusionKind::encoder}, opt);
  REQUIRE(a.rows.size() == 8);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].flops == b.rows[i].flops);
    CHECK(a.rows[i].median_ms > 0.0);
    CHECK(a.rows[i].iqr_ms >= 0.0);
  }
  CHECK(a.rows[0].kind == FusionKind::encoder);
  CHECK(a.rows[0].L == 4);
  CHECK(a.rows[3].L == 16);
  // Decoder flops are affine in L: equal steps, equal increments.
  const double d1 = a.rows[5].flops - a.rows[4].flops;
  CHECK(a.rows[6].flops - a.rows[5].flops == doctest::Approx(d1));
  CHECK(a.rows[7].flops - a.rows[6].flops == doctest::Approx(d1));

  const BenchResult back = parse_bench_csv(bench_csv(a));
  REQUIRE(back.rows.size() == a.rows.size());
  CHECK(back.rows[7].kind == FusionKind::decoder);
  CHECK(back.rows[7].flops == doctest::Approx(a.rows[7].flops));
  CHECK(back.rows[2].median_ms == doctest::Approx(a.rows[2].median_ms));
  CHECK_THROWS_AS(parse_bench_csv("kind,N\n"), FormatError);
  CHECK_THROWS_AS(parse_bench_csv("kind,N,L,C,layers,median_ms,iqr_ms,flops\nencoder,1,2\n"), FormatError);
  CHECK_THROWS_AS(parse_bench_csv("kind,N,L,C,layers,median_ms,iqr_ms,flops\nfoo,1,2,3,4,5,6,7\n"), FormatError);

  opt.reps = 5;
  CHECK_THROWS_AS(bench_fusion_scaling({FusionKind::decoder}, opt), ConfigError);
  CHECK_THROWS_AS(parse_fusion_kind("hybrid"), ConfigError);
}

TEST_CASE("evaluation scoring") {
  const auto data = generate_dataset(40, 6, SynthConfig{});
  std::vector<SamplePrediction> preds;
  for (const auto& s : data) {
    preds.push_back(perfect(s));
  }
  EvalResult r = score_predictions(preds, data);
  CHECK(r.precision_at_05 == 1.0);
  CHECK(r.miou == 1.0);

  // Corner boxes (0,0)-(1,1) and (0.5,0)-(1.5,1) overlap with IoU 1/3.
  CHECK(box_iou(BBox{0.5, 0.5, 1.0, 1.0}, BBox{1.0, 0.5, 1.0, 1.0}) == doctest::Approx(1.0 / 3.0));
  preds[0].box = BBox{data[0].gt.box.cx + data[0].gt.box.w / 2, data[0].gt.box.cy, data[0].gt.box.w,
                      data[0].gt.box.h};
  std::fill(preds[1].mask.begin(), preds[1].mask.end(), 0.0f);
  r = score_predictions(preds, data);
  CHECK(r.box_iou[0] == doctest::Approx(1.0 / 3.0));
  CHECK(r.precision_at_05 == doctest::Approx(5.0 / 6.0));
  CHECK(r.mask_iou[1] == 0.0);
  CHECK(r.miou == doctest::Approx(5.0 / 6.0));

  // Order does not matter.
  std::vector<SamplePrediction> rp(preds.rbegin(), preds.rend());
  std::vector<SynthSample> rd(data.rbegin(), data.rend());
  const EvalResult rr = score_predictions(rp, rd);
  CHECK(rr.precision_at_05 == doctest::Approx(r.precision_at_05));
  CHECK(rr.miou == doctest::Approx(r.miou));

  const std::vector<float> half = {0.5f, 0.51f, 0.9f, 0.0f};
  const std::vector<std::uint8_t> gt = {1, 1, 0, 0};
  CHECK(mask_iou(half, gt) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(std::vector<float>(4, 0.0f), std::vector<std::uint8_t>(4, 0)) == 1.0);
  CHECK_THROWS_AS(score_predictions({}, {}), PreconditionError);
  CHECK_THROWS_AS(mask_iou(half, std::vector<std::uint8_t>(3, 0)), DimensionError);
}

TEST_CASE("toy training is deterministic and reduces the loss") {
  const EEVGConfig cfg = tiny_config();
  const auto data = generate_dataset(100, 160, SynthConfig::from(cfg));
  std::vector<EpochMetrics> a, b;
  const ToyModel ma = run_training(cfg, data, cfg.epochs, a);
  const ToyModel mb = run_training(cfg, data, cfg.epochs, b);
  REQUIRE(a.size() == cfg.epochs);
  for (std::size_t e = 0; e < a.size(); ++e) {
    CHECK(a[e].loss.total == b[e].loss.total);
    CHECK(a[e].mean_keep == b[e].mean_keep);
    CHECK(a[e].mean_keep.size() == cfg.D_layers);
  }
  CHECK(encode_tensors(named_tensors(ma)) == encode_tensors(named_tensors(mb)));
  CHECK(a[5].loss.total < a[0].loss.total);
  CHECK(a[7].loss.total < a[2].loss.total);
  CHECK(a.back().mean_keep.back() < double(cfg.N()));
  for (std::size_t e = 0; e < a.size(); ++e) {
    CHECK(std::abs(a[e].loss.total - (cfg.loss.lambda_det * a[e].loss.det + cfg.loss.lambda_seg * a[e].loss.seg)) <
          1e-5);
  }

  const auto path = temp_dir("eevg_toy_model.bin");
  save_toy_model(ma, path);
  const ToyModel loaded = load_toy_model(path, cfg);
  CHECK(encode_tensors(named_tensors(loaded)) == encode_tensors(named_tensors(ma)));
  EEVGConfig other = cfg;
  other.C = 16;
  other.D_ffn = 21;
  CHECK_THROWS_AS(load_toy_model(path, other), FormatError);
  std::filesystem::remove(path);

  const EvalResult r1 = evaluate(cfg, ma, std::span(data).first(20));
  const EvalResult r2 = evaluate(cfg, loaded, std::span(data).first(20));
  CHECK(r1.miou == r2.miou);
  CHECK(r1.precision_at_05 == r2.precision_at_05);
  CHECK_THROWS_AS(run_training(cfg, {}, 1, a), PreconditionError);
}

TEST_CASE("rendering") {
  const auto dir = temp_dir("eevg_render");
  std::filesystem::create_directories(dir);
  const std::vector<double> ones(12, 1.0);
  write_pgm(dir / "ones.pgm", ones, 3, 4);
  const GrayImage img = read_pgm(dir / "ones.pgm");
  CHECK(img.rows == 3);
  CHECK(img.cols == 4);
  for (auto v : img.pixels) {
    CHECK(v == 255);
  }
  std::ifstream in(dir / "ones.pgm", std::ios::binary);
  char magic[2];
  in.read(magic, 2);
  CHECK(magic[0] == 'P');
  CHECK(magic[1] == '5');

  const EEVGConfig cfg = tiny_config();
  const ToyModel m = ToyModel::init(cfg);
  const SynthSample s = generate_sample(3, SynthConfig::from(cfg));
  const auto files = render_demo(cfg, m, s, dir / "demo");
  CHECK(files.size() == 1 + 2 * cfg.D_layers + 3);
  for (const auto& f : files) {
    CHECK(std::filesystem::exists(f));
  }
  const GrayImage scores = read_pgm(dir / "demo" / "layer0_scores.pgm");
  CHECK(scores.rows == cfg.grid_rows());
  const GrayImage mask = read_pgm(dir / "demo" / "gt_mask.pgm");
  for (std::size_t i = 0; i < s.gt.mask.size(); ++i) {
    CHECK(mask.pixels[i] == (s.gt.mask[i] ? 255 : 0));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("micro config") {
  const EEVGConfig c = micro_config();
  CHECK(c.N() == 16);
  CHECK(c.L_max == 4);
  CHECK(c.C == 16);
  CHECK(c.h == 2);
  CHECK(c.D_layers == 2);
}
