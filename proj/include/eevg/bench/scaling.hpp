#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace eevg {

enum class FusionKind { encoder, decoder };

std::string to_string(FusionKind k);
// Throws ConfigError for anything but "encoder" or "decoder".
FusionKind parse_fusion_kind(const std::string& s);

struct BenchRow {
  FusionKind kind;
  std::size_t N, L, C, layers;
  double median_ms;
  double iqr_ms;
  double flops;
};

struct BenchResult {
  std::vector<BenchRow> rows;  // sorted by kind, then L
  std::vector<std::string> warnings;
};

struct BenchOptions {
  std::size_t N = 196;
  std::size_t C = 192;
  std::size_t heads = 3;
  std::size_t layers = 3;
  std::vector<std::size_t> L_list = {64, 128, 256, 512, 1024};
  std::size_t warmups = 3;
  std::size_t reps = 15;
  std::uint64_t seed = 0;
};

// Forward-only float passes through randomly initialized fusion stacks, no
// elimination. Every timing round visits each L once and, at each L, runs
// the requested kinds back to back (encoder, decoder, encoder, ...). FFN
// widths follow matched_ffn_dims(C).
BenchResult bench_fusion_scaling(const std::vector<FusionKind>& kinds, const BenchOptions& opt);

// Pins the process to the CPU it is running on and stops glibc from handing
// large freed blocks back to the kernel, so repeated passes do not pay for
// fresh page faults. Called by bench_fusion_scaling; harmless to repeat.
void prepare_benchmark_process();

// Smallest nonzero step the steady clock shows, in milliseconds.
double timer_resolution_ms();

std::string bench_csv(const BenchResult& r);
// Parses the CSV written above (header required). Throws FormatError.
BenchResult parse_bench_csv(const std::string& text);

struct FitReport {
  std::string hypothesis;  // "linear" (t = a + b·L) or "quadratic" (t = a + b·(N+L)²)
  double a = 0.0, b = 0.0;
  double r2 = 0.0;
  bool zero_variance = false;  // targets constant; r2 is reported as 0
};

// Ordinary least squares of y on x with intercept.
FitReport fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct ComplexityFit {
  FusionKind kind;
  FitReport linear;
  FitReport quadratic;
};

// One entry per fusion kind present. Each kind needs ≥ 4 distinct L values
// at a single N, else PreconditionError.
std::vector<ComplexityFit> fit_complexity(const BenchResult& r);

}  // namespace eevg
