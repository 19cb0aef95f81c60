// Command-line front end: gradient checks, scaling benchmarks, fits, data
// generation, training, evaluation and demo rendering.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "eevg/bench/gradsuite.hpp"
#include "eevg/bench/render.hpp"
#include "eevg/bench/scaling.hpp"
#include "eevg/bench/training.hpp"
#include "eevg/heads/heads.hpp"

using namespace eevg;

namespace {

constexpr double kGradTolerance = 1e-4;

EEVGConfig config_or_default(const std::string& path) {
  return path.empty() ? EEVGConfig{} : load_config(path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  out << text;
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
}

int cmd_gradcheck(const std::vector<std::uint64_t>& seeds) {
  std::cout << "check,seed,max_rel_error,coordinates,crossed_threshold,pass\n";
  bool ok = true;
  for (const GradSuiteEntry& e : run_gradient_suite(seeds)) {
    const bool pass = e.report.max_rel_error <= kGradTolerance;
    ok = ok && pass;
    std::cout << e.name << ',' << e.seed << ',' << e.report.max_rel_error << ',' << e.report.coordinates << ','
              << e.crossed_threshold << ',' << pass << '\n';
  }
  return ok ? 0 : 1;
}

int cmd_params(std::size_t c, std::size_t p) {
  const std::size_t mask = mask_head_parameters(c, p);
  std::cout << "head,C,P,parameters,millions\n";
  std::cout << "mask," << c << ',' << p << ',' << mask << ',' << (static_cast<double>(mask) / 1e6) << '\n';
  std::cout << "detection," << c << ',' << p << ',' << detection_head_parameters(c) << ','
            << (static_cast<double>(detection_head_parameters(c)) / 1e6) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEVG decoder-only visual grounding toolkit"};
  app.require_subcommand(1);

  std::vector<std::uint64_t> grad_seeds = {1, 2, 3, 4, 5};
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every primitive and the joint loss");
  grad->add_option("--seeds", grad_seeds, "seeds to run")->delimiter(',');

  std::vector<std::string> kinds = {"encoder", "decoder"};
  BenchOptions bench_opt;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "forward-only fusion runtime against text length");
  bench->add_option("--fusion", kinds, "encoder, decoder or both")->delimiter(',');
  bench->add_option("--n", bench_opt.N, "visual tokens");
  bench->add_option("--c", bench_opt.C, "channels");
  bench->add_option("--heads", bench_opt.heads, "attention heads");
  bench->add_option("--layers", bench_opt.layers, "fusion layers");
  bench->add_option("--l-list", bench_opt.L_list, "text lengths")->delimiter(',');
  bench->add_option("--reps", bench_opt.reps, "timed repetitions (>= 9)");
  bench->add_option("--warmups", bench_opt.warmups, "untimed warmups (>= 3)");
  bench->add_option("--seed", bench_opt.seed, "weight and input seed");
  bench->add_option("--out", bench_out, "CSV path (default stdout)");

  std::string fit_input;
  auto* fit = app.add_subcommand("fit", "linear and quadratic fits of a bench CSV");
  fit->add_option("--input", fit_input, "bench CSV")->required();

  std::size_t gen_count = 100;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_config;
  auto* gen = app.add_subcommand("gen", "generate a synthetic grounding dataset");
  gen->add_option("--count", gen_count, "samples");
  gen->add_option("--seed", gen_seed, "seed of the first sample");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--config", gen_config, "model config (image size, L_max)");

  std::string train_config, train_data, train_out, train_log;
  std::size_t train_epochs = 0;
  auto* train = app.add_subcommand("train", "train the toy model");
  train->add_option("--config", train_config, "model config");
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "weight file")->required();
  train->add_option("--epochs", train_epochs, "override the config's epoch count");
  train->add_option("--log", train_log, "per-epoch metrics CSV (default stdout)");

  std::string eval_config, eval_weights, eval_data, eval_mode;
  auto* eval = app.add_subcommand("eval", "P@0.5 and mask mIoU on a dataset");
  eval->add_option("--config", eval_config, "model config");
  eval->add_option("--weights", eval_weights, "weight file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--elimination", eval_mode, "override: dynamic, static or none");

  std::string demo_config, demo_weights, demo_out;
  std::uint64_t demo_sample = 0;
  auto* demo = app.add_subcommand("demo", "render score maps and the mask for one generated sample");
  demo->add_option("--config", demo_config, "model config");
  demo->add_option("--weights", demo_weights, "weight file")->required();
  demo->add_option("--sample", demo_sample, "sample seed");
  demo->add_option("--out-dir", demo_out, "output directory")->required();

  std::size_t params_c = 768, params_p = 16;
  auto* params = app.add_subcommand("params", "head parameter counts");
  params->add_option("--c", params_c, "channels");
  params->add_option("--p", params_p, "patch size");

  CLI11_PARSE(app, argc, argv);

  try {
    if (grad->parsed()) {
      return cmd_gradcheck(grad_seeds);
    }
    if (params->parsed()) {
      return cmd_params(params_c, params_p);
    }
    if (bench->parsed()) {
      std::vector<FusionKind> fk;
      for (const auto& k : kinds) {
        fk.push_back(parse_fusion_kind(k));
      }
      const BenchResult r = bench_fusion_scaling(fk, bench_opt);
      for (const auto& w : r.warnings) {
        std::cerr << "warning: " << w << '\n';
      }
      write_text(bench_out, bench_csv(r));
      return 0;
    }
    if (fit->parsed()) {
      const BenchResult r = parse_bench_csv(read_text(fit_input));
      std::cout << "kind,hypothesis,a,b,r2,zero_variance\n";
      for (const ComplexityFit& f : fit_complexity(r)) {
        for (const FitReport& rep : {f.linear, f.quadratic}) {
          std::cout << to_string(f.kind) << ',' << rep.hypothesis << ',' << rep.a << ',' << rep.b << ',' << rep.r2
                    << ',' << rep.zero_variance << '\n';
          if (rep.zero_variance) {
            std::cerr << "warning: " << to_string(f.kind) << " timings have zero variance; R^2 reported as 0\n";
          }
        }
      }
      return 0;
    }
    if (gen->parsed()) {
      const auto samples = generate_dataset(gen_seed, gen_count, SynthConfig::from(config_or_default(gen_config)));
      write_dataset(gen_out, samples);
      std::cerr << "wrote " << samples.size() << " samples to " << gen_out << '\n';
      return 0;
    }
    if (train->parsed()) {
      const EEVGConfig cfg = config_or_default(train_config);
      const auto data = read_dataset(train_data);
      std::ofstream log_file;
      if (!train_log.empty()) {
        log_file.open(train_log);
        if (!log_file) {
          throw std::runtime_error("cannot write " + train_log);
        }
      }
      std::ostream& log = train_log.empty() ? std::cout : log_file;
      log << metrics_csv_header(cfg.D_layers) << '\n';
      TrainingOptions opt;
      opt.on_epoch = [&](const EpochMetrics& m) { log << metrics_csv_line(m) << std::endl; };
      std::vector<EpochMetrics> metrics;
      prepare_benchmark_process();
      const ToyModel model = run_training(cfg, data, train_epochs ? train_epochs : cfg.epochs, metrics, opt);
      save_toy_model(model, train_out);
      return 0;
    }
    if (eval->parsed()) {
      EEVGConfig cfg = config_or_default(eval_config);
      if (!eval_mode.empty()) {
        cfg.elimination = parse_elimination_mode(eval_mode);
      }
      const ToyModel model = load_toy_model(eval_weights, cfg);
      const auto data = read_dataset(eval_data);
      const EvalResult r = evaluate(cfg, model, data);
      std::cout << "samples,elimination,precision_at_0.5,miou,mean_final_keep,final_keep_stddev\n"
                << data.size() << ',' << to_string(cfg.elimination) << ',' << r.precision_at_05 << ',' << r.miou
                << ',' << r.mean_final_keep() << ',' << r.final_keep_stddev() << '\n';
      return 0;
    }
    if (demo->parsed()) {
      const EEVGConfig cfg = config_or_default(demo_config);
      const ToyModel model = load_toy_model(demo_weights, cfg);
      const SynthSample s = generate_sample(demo_sample, SynthConfig::from(cfg));
      std::cerr << "expression: " << expression_text(s.tokens) << '\n';
      for (const auto& path : render_demo(cfg, model, s, demo_out)) {
        std::cout << path.string() << '\n';
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
