#pragma once

#include <cstddef>
#include <vector>

#include "eevg/elimination/token_set.hpp"
#include "eevg/fusion/layers.hpp"

namespace eevg {

inline constexpr double kDefaultAlpha = 0.015;
inline constexpr int kDefaultWindow = 1;

struct PatchGrid {
  std::size_t rows = 0;  // H / P
  std::size_t cols = 0;  // W / P
  std::size_t size() const { return rows * cols; }
};

/// One score per surviving token, in TokenSet order.
struct AttentionScoreMap {
  std::vector<double> values;
  std::size_t size() const { return values.size(); }
};

// Head mean of a heads × N′ matrix of location-row attention.
template <typename T>
AttentionScoreMap location_attention_scores(const Tensor<T>& loc_scores_per_head);

// Scatters the scores onto the full patch grid (eliminated cells are 0),
// replaces every cell by its (2k+1)² window sum divided by (2k+1)² with
// out-of-grid cells counting as 0, and gathers back the surviving cells.
AttentionScoreMap adaptive_spatial_attention(const AttentionScoreMap& scores, const TokenSet& tokens, PatchGrid grid,
                                             int k);

// Affine rescale to [0, 1]. A constant map (max = min) maps to all ones.
AttentionScoreMap minmax_normalize(const AttentionScoreMap& scores);

// Positions (into the current token list) whose normalized score is ≥ alpha.
std::vector<std::size_t> surviving_positions(const AttentionScoreMap& normalized, double alpha);

// Keeps the location token, the memory and the visual tokens at the given
// positions of the current list (strictly increasing, nonempty).
template <typename T>
FusionState<T> keep_positions(const FusionState<T>& state, std::span<const std::size_t> positions);

// Keeps exactly the visual tokens with normalized score ≥ alpha; the location
// token and the memory pass through. Throws ConfigError unless 0 ≤ alpha < 1.
template <typename T>
FusionState<T> eliminate_tokens(const FusionState<T>& state, const AttentionScoreMap& normalized, double alpha);

// Removes the m lowest-scoring visual tokens; among equal scores the lower
// original index goes first. Throws PreconditionError unless m < N′.
template <typename T>
FusionState<T> static_eliminate(const FusionState<T>& state, const AttentionScoreMap& scores, std::size_t m);

// Full-grid view of a score map for inspection; eliminated cells read as 0.
std::vector<double> scores_on_grid(const AttentionScoreMap& scores, const TokenSet& tokens);
// 1 at surviving cells, 0 at eliminated cells.
std::vector<double> keep_mask_on_grid(const TokenSet& tokens);

}  // namespace eevg
