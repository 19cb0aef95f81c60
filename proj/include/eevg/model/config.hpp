#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "eevg/elimination/elimination.hpp"
#include "eevg/losses/losses.hpp"

namespace eevg {

enum class EliminationMode { dynamic, fixed, none };

std::string to_string(EliminationMode m);
EliminationMode parse_elimination_mode(const std::string& s);

/// Every hyperparameter of the model and its training run. Field names are
/// the keys of the text config format.
struct EEVGConfig {
  std::size_t H = 64;
  std::size_t W = 64;
  std::size_t P = 8;
  std::size_t L_max = 6;
  std::size_t C = 128;
  std::size_t C_v = 64;
  std::size_t C_l = 32;
  std::size_t h = 4;
  std::size_t D_layers = 3;
  std::size_t D_ffn = 171;  // round(4C/3); 1024 at C = 768
  double alpha = kDefaultAlpha;
  int k = kDefaultWindow;
  LossConfig loss;
  std::uint64_t seed = 1;

  EliminationMode elimination = EliminationMode::dynamic;
  std::size_t static_m = 11;  // tokens removed per layer in fixed mode

  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t epochs = 30;

  std::size_t grid_rows() const { return H / P; }
  std::size_t grid_cols() const { return W / P; }
  std::size_t N() const { return grid_rows() * grid_cols(); }
  PatchGrid grid() const { return {grid_rows(), grid_cols()}; }

  // Throws ConfigError naming the offending field.
  void validate() const;

  // 768-channel, 16-pixel-patch scale with the default feed-forward width.
  static EEVGConfig paper_scale();
};

// `key = value` lines, `#` starts a comment. Unknown keys and malformed
// values are ConfigErrors naming the line.
EEVGConfig parse_config(const std::string& text);
EEVGConfig load_config(const std::filesystem::path& path);
std::string format_config(const EEVGConfig& cfg);

}  // namespace eevg
