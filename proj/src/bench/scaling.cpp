#include "eevg/bench/scaling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#if defined(__linux__)
#include <malloc.h>
#include <sched.h>
#endif

#include "eevg/fusion/flops.hpp"
#include "eevg/fusion/layers.hpp"

namespace eevg {

std::string to_string(FusionKind k) {
  return k == FusionKind::encoder ? "encoder" : "decoder";
}

FusionKind parse_fusion_kind(const std::string& s) {
  if (s == "encoder") {
    return FusionKind::encoder;
  }
  if (s == "decoder") {
    return FusionKind::decoder;
  }
  throw ConfigError("unknown fusion kind '" + s + "' (expected encoder or decoder)");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// Linear interpolation between order statistics.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Stacks {
  std::vector<LayerWeights<float>> decoder;
  std::vector<EncoderLayerWeights<float>> encoder;
};

Tensor<float> random_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor<float> t({rows, cols});
  for (float& v : t.data()) {
    v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return t;
}

struct Inputs {
  Tensor<float> query;   // (1+N)×C
  Tensor<float> memory;  // L×C
  Tensor<float> joint;   // (1+L+N)×C
};

double run_once(FusionKind kind, const Stacks& s, const Inputs& in, std::size_t n) {
  const auto start = Clock::now();
  Tape<float> tape(false);
  float sink = 0.0f;
  if (kind == FusionKind::decoder) {
    FusionState<float> state{tape.constant(in.query), tape.constant(in.memory), {}, TokenSet::all(n)};
    for (const auto& layer : s.decoder) {
      state = decoder_layer_forward(state, layer).state;
    }
    sink = state.tokens.value()[0];
  } else {
    Var<float> x = tape.constant(in.joint);
    for (const auto& layer : s.encoder) {
      x = encoder_layer_forward(x, layer);
    }
    sink = x.value()[0];
  }
  const auto stop = Clock::now();
  if (!std::isfinite(sink)) {
    throw NumericError("benchmark forward pass produced a non-finite value");
  }
  return elapsed_ms(start, stop);
}

}  // namespace

void prepare_benchmark_process() {
#if defined(__linux__)
  const int cpu = sched_getcpu();
  if (cpu >= 0) {
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(cpu, &set);
    sched_setaffinity(0, sizeof set, &set);
  }
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

double timer_resolution_ms() {
  double best = 1e9;
  for (int i = 0; i < 64; ++i) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) {
      b = Clock::now();
    }
    best = std::min(best, elapsed_ms(a, b));
  }
  return best;
}

BenchResult bench_fusion_scaling(const std::vector<FusionKind>& kinds, const BenchOptions& opt) {
  if (kinds.empty() || opt.L_list.empty()) {
    throw ConfigError("bench: nothing to measure");
  }
  if (opt.reps < 9 || opt.warmups < 3) {
    throw ConfigError("bench: needs at least 9 repetitions after 3 warmups");
  }
  if (opt.N == 0 || opt.layers == 0) {
    throw ConfigError("bench: N and layers must be positive");
  }
  prepare_benchmark_process();
  Rng rng(opt.seed);
  const FfnDims ffn = matched_ffn_dims(opt.C);
  Stacks stacks;
  for (std::size_t i = 0; i < opt.layers; ++i) {
    stacks.decoder.push_back(LayerWeights<float>::init(opt.C, opt.heads, ffn.decoder, rng));
    stacks.encoder.push_back(EncoderLayerWeights<float>::init(opt.C, opt.heads, ffn.encoder, rng));
  }
  const double resolution = timer_resolution_ms();

  std::vector<std::size_t> ls = opt.L_list;
  std::sort(ls.begin(), ls.end());
  std::vector<Inputs> inputs;
  for (std::size_t l : ls) {
    if (l == 0) {
      throw ConfigError("bench: L must be positive");
    }
    inputs.push_back({random_rows(rng, 1 + opt.N, opt.C), random_rows(rng, l, opt.C),
                      random_rows(rng, 1 + l + opt.N, opt.C)});
  }
  // Each round visits every (L, kind) once, so slow drift in machine speed
  // lands on all points alike instead of bending the curve.
  std::map<std::pair<int, std::size_t>, std::vector<double>> times;
  for (std::size_t r = 0; r < opt.warmups + opt.reps; ++r) {
    for (std::size_t i = 0; i < ls.size(); ++i) {
      for (FusionKind k : kinds) {
        const double t = run_once(k, stacks, inputs[i], opt.N);
        if (r >= opt.warmups) {
          times[{static_cast<int>(k), ls[i]}].push_back(t);
        }
      }
    }
  }

  BenchResult out;
  std::vector<FusionKind> ordered = kinds;
  std::sort(ordered.begin(), ordered.end());
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());
  for (FusionKind k : ordered) {
    for (std::size_t l : ls) {
      const auto& t = times[{static_cast<int>(k), l}];
      const FusionDims dims{opt.N, l, opt.C, k == FusionKind::decoder ? ffn.decoder : ffn.encoder, opt.layers};
      BenchRow row{k,
                   opt.N,
                   l,
                   opt.C,
                   opt.layers,
                   quantile(t, 0.5),
                   quantile(t, 0.75) - quantile(t, 0.25),
                   k == FusionKind::decoder ? decoder_fusion_flops(dims) : encoder_fusion_flops(dims)};
      if (resolution > 0.01 * row.median_ms) {
        std::ostringstream w;
        w << "timer resolution " << resolution << " ms exceeds 1% of the " << to_string(k) << " median at L=" << l
          << " (" << row.median_ms << " ms)";
        out.warnings.push_back(w.str());
      }
      out.rows.push_back(row);
    }
  }
  return out;
}

std::string bench_csv(const BenchResult& r) {
  std::ostringstream os;
  os.precision(9);
  os << "kind,N,L,C,layers,median_ms,iqr_ms,flops\n";
  for (const BenchRow& row : r.rows) {
    os << to_string(row.kind) << ',' << row.N << ',' << row.L << ',' << row.C << ',' << row.layers << ','
       << row.median_ms << ',' << row.iqr_ms << ',' << row.flops << '\n';
  }
  return os.str();
}

BenchResult parse_bench_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("kind,N,L,C,layers,median_ms,iqr_ms,flops", 0) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, 1, "bench CSV header missing");
  }
  BenchResult r;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") {
      continue;
    }
    std::vector<std::string> f;
    std::istringstream fields(line);
    for (std::string cell; std::getline(fields, cell, ',');) {
      f.push_back(cell);
    }
    if (f.size() != 8) {
      throw FormatError(FormatErrorKind::parse, line_no, "expected 8 fields, got " + std::to_string(f.size()));
    }
    try {
      r.rows.push_back({parse_fusion_kind(f[0]), std::stoul(f[1]), std::stoul(f[2]), std::stoul(f[3]),
                        std::stoul(f[4]), std::stod(f[5]), std::stod(f[6]), std::stod(f[7])});
    } catch (const ConfigError& e) {
      throw FormatError(FormatErrorKind::parse, line_no, e.what());
    } catch (const std::logic_error&) {
      throw FormatError(FormatErrorKind::parse, line_no, "bad number in '" + line + "'");
    }
  }
  return r;
}

FitReport fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw PreconditionError("fit needs at least two (x, y) pairs of equal count");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) {
    throw PreconditionError("fit needs at least two distinct x values");
  }
  FitReport f;
  f.b = sxy / sxx;
  f.a = my - f.b * mx;
  if (syy == 0.0) {
    f.zero_variance = true;
    f.r2 = 0.0;
    return f;
  }
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.a + f.b * x[i]);
    ss_res += e * e;
  }
  f.r2 = 1.0 - ss_res / syy;
  return f;
}

std::vector<ComplexityFit> fit_complexity(const BenchResult& r) {
  std::vector<ComplexityFit> out;
  for (FusionKind k : {FusionKind::encoder, FusionKind::decoder}) {
    std::vector<double> ls, quad, t;
    std::set<std::size_t> distinct_l, distinct_n;
    for (const BenchRow& row : r.rows) {
      if (row.kind != k) {
        continue;
      }
      const double s = static_cast<double>(row.N + row.L);
      ls.push_back(static_cast<double>(row.L));
      quad.push_back(s * s);
      t.push_back(row.median_ms);
      distinct_l.insert(row.L);
      distinct_n.insert(row.N);
    }
    if (t.empty()) {
      continue;
    }
    if (distinct_l.size() < 4 || distinct_n.size() != 1) {
      throw PreconditionError(to_string(k) + " fit needs at least 4 distinct L values at one N, got " +
                              std::to_string(distinct_l.size()) + " L values over " +
                              std::to_string(distinct_n.size()) + " N values");
    }
    ComplexityFit fit{k, fit_line(ls, t), fit_line(quad, t)};
    fit.linear.hypothesis = "linear";
    fit.quadratic.hypothesis = "quadratic";
    out.push_back(fit);
  }
  return out;
}

}  // namespace eevg
