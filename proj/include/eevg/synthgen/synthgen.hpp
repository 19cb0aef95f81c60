#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eevg/losses/losses.hpp"
#include "eevg/model/config.hpp"

namespace eevg {

enum class Color : std::uint8_t { red, green, blue };
enum class ShapeKind : std::uint8_t { square, circle, triangle };
enum class Position : std::uint8_t { left, right, top, bottom };

/// Token ids: 0 pad, 1–3 colors, 4–6 shapes, 7–10 positions.
namespace vocab {
inline constexpr std::uint32_t pad = 0;
inline constexpr std::uint32_t size = 11;
inline constexpr std::uint32_t token(Color c) { return 1 + static_cast<std::uint32_t>(c); }
inline constexpr std::uint32_t token(ShapeKind s) { return 4 + static_cast<std::uint32_t>(s); }
inline constexpr std::uint32_t token(Position p) { return 7 + static_cast<std::uint32_t>(p); }
// Throws IndexError for ids ≥ size.
std::string_view name(std::uint32_t id);
}  // namespace vocab

struct PlacedShape {
  Color color;
  ShapeKind kind;
  std::size_t x0, y0;  // top-left of the bounding square
  std::size_t side;
};

struct SynthConfig {
  std::size_t H = 64;
  std::size_t W = 64;
  std::size_t L_max = 6;
  std::size_t min_side = 12;
  std::size_t max_side = 22;
  std::size_t gap = 2;       // minimum pixels between bounding squares
  std::size_t attempts = 64;  // placement draws per shape per layout
  std::size_t layouts = 32;   // full restarts before giving up

  static SynthConfig from(const EEVGConfig& cfg);
};

struct SynthSample {
  std::uint64_t seed = 0;
  std::size_t height = 0, width = 0;
  std::vector<float> image;            // H×W×3, channels last, values in [0, 1]
  std::vector<std::uint32_t> tokens;   // L_max ids, pad-filled
  std::vector<std::uint8_t> pad_mask;  // 1 for real tokens
  GroundTruth gt;
  // Present on generated samples only; datasets read from disk omit them.
  std::vector<PlacedShape> shapes;
  std::size_t referent = 0;

  std::size_t expression_length() const;
};

// 2–4 shapes on a black canvas; the first is the referent. Its color and
// kind are uniform draws. The expression is the shortest of {kind},
// {color}, {color kind}, {color kind position} that singles it out;
// positions name the extreme object among those sharing color and kind.
// Throws GenerationError if no layout works within the retry budget.
SynthSample generate_sample(Rng& rng, const SynthConfig& cfg);
// Sample `seed` of a dataset: the generator is seeded with mix_seed(seed).
SynthSample generate_sample(std::uint64_t seed, const SynthConfig& cfg);
std::vector<SynthSample> generate_dataset(std::uint64_t first_seed, std::size_t count, const SynthConfig& cfg);

std::string expression_text(std::span<const std::uint32_t> tokens);

// Patch i (row-major over the grid) becomes row i; within a row the order is
// pixel row, pixel column, channel.
template <typename T>
Tensor<T> patchify(std::span<const float> image, std::size_t height, std::size_t width, std::size_t patch);

/// Toy stand-ins for the visual and linguistic backbones.
template <typename T>
struct ToyBackbone {
  Tensor<T> patch_w, patch_b;  // 3P²×C_v, 1×C_v
  Tensor<T> token_table;       // vocab::size × C_l; row 0 is the pad embedding

  static ToyBackbone init(const EEVGConfig& cfg, Rng& rng);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + "patch.w", patch_w), f(p + "patch.b", patch_b), f(p + "token_table", token_table);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    f(p + "patch.w", patch_w), f(p + "patch.b", patch_b), f(p + "token_table", token_table);
  }
};

template <typename T>
Var<T> patch_embed(const Var<T>& patches, const ToyBackbone<T>& b);
template <typename T>
Var<T> token_embed(Tape<T>& tape, std::span<const std::uint32_t> tokens, const ToyBackbone<T>& b);

// <dir>/dataset.bin (binary records, run-length-encoded masks) and
// <dir>/manifest.tsv (one line per sample).
void write_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples);
std::vector<SynthSample> read_dataset(const std::filesystem::path& dir);

// Alternating run lengths starting with a (possibly empty) run of zeros.
std::vector<std::uint32_t> rle_encode(std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> rle_decode(std::span<const std::uint32_t> runs, std::size_t size);

}  // namespace eevg
