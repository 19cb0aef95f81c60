#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eevg/model/config.hpp"
#include "eevg/numerics/gradcheck.hpp"

namespace eevg {

struct GradSuiteEntry {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckReport report;
  // Model entry only: at some finite-difference probe the live threshold
  // would have kept a different token set than the base point. Probes
  // replay the base token sets, so the check still compares like with like.
  bool crossed_threshold = false;
};

// N = 16 (16×16 image, 4-pixel patches), L = 4, C = 16, two heads, two layers.
EEVGConfig micro_config();

// Every differentiable primitive (central differences, h = 1e-6), the four
// loss terms, and the joint loss of the full micro-config model through
// dynamic elimination (Richardson-extrapolated central differences,
// h = 1e-2, token sets replayed from the unperturbed pass). 64-bit
// throughout; one entry per (check, seed).
std::vector<GradSuiteEntry> run_gradient_suite(const std::vector<std::uint64_t>& seeds);

}  // namespace eevg
