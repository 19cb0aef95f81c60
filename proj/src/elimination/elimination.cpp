#include "eevg/elimination/elimination.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace eevg {

template <typename T>
AttentionScoreMap location_attention_scores(const Tensor<T>& loc_scores_per_head) {
  const std::size_t heads = loc_scores_per_head.rows();
  const std::size_t n = loc_scores_per_head.cols();
  AttentionScoreMap out{std::vector<double>(n, 0.0)};
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t j = 0; j < n; ++j) {
      out.values[j] += static_cast<double>(loc_scores_per_head(h, j));
    }
  }
  for (double& v : out.values) {
    v /= static_cast<double>(heads);
  }
  return out;
}

AttentionScoreMap adaptive_spatial_attention(const AttentionScoreMap& scores, const TokenSet& tokens, PatchGrid grid,
                                             int k) {
  if (k < 0) {
    throw ConfigError("adaptive spatial attention window must be non-negative, got " + std::to_string(k));
  }
  if (tokens.total() != grid.size() || scores.size() != tokens.size()) {
    throw DimensionError("score map of " + std::to_string(scores.size()) + " values, " +
                         std::to_string(tokens.size()) + "/" + std::to_string(tokens.total()) +
                         " tokens and a " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                         " grid disagree");
  }
  const std::vector<double> full = scores_on_grid(scores, tokens);
  const auto rows = static_cast<std::ptrdiff_t>(grid.rows);
  const auto cols = static_cast<std::ptrdiff_t>(grid.cols);
  const double denom = static_cast<double>((2 * k + 1) * (2 * k + 1));
  AttentionScoreMap out{std::vector<double>(tokens.size())};
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const auto idx = static_cast<std::ptrdiff_t>(tokens.kept()[p]);
    const std::ptrdiff_t i = idx / cols;
    const std::ptrdiff_t j = idx % cols;
    double window = 0.0;
    for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(0, i - k); r <= std::min(rows - 1, i + k); ++r) {
      for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, j - k); c <= std::min(cols - 1, j + k); ++c) {
        window += full[static_cast<std::size_t>(r * cols + c)];
      }
    }
    out.values[p] = window / denom;
  }
  return out;
}

AttentionScoreMap minmax_normalize(const AttentionScoreMap& scores) {
  if (scores.values.empty()) {
    throw PreconditionError("cannot normalize an empty score map");
  }
  const auto [lo, hi] = std::minmax_element(scores.values.begin(), scores.values.end());
  const double mn = *lo;
  const double mx = *hi;
  AttentionScoreMap out{std::vector<double>(scores.size(), 1.0)};
  if (mx > mn) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      out.values[i] = (scores.values[i] - mn) / (mx - mn);
    }
  }
  return out;
}

std::vector<std::size_t> surviving_positions(const AttentionScoreMap& normalized, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("elimination threshold must lie in [0, 1), got " + std::to_string(alpha));
  }
  std::vector<std::size_t> keep;
  for (std::size_t p = 0; p < normalized.size(); ++p) {
    if (normalized.values[p] >= alpha) {
      keep.push_back(p);
    }
  }
  return keep;
}

template <typename T>
FusionState<T> keep_positions(const FusionState<T>& state, std::span<const std::size_t> positions) {
  std::vector<std::size_t> rows;
  rows.reserve(positions.size() + 1);
  rows.push_back(0);
  for (std::size_t p : positions) {
    rows.push_back(p + 1);
  }
  FusionState<T> next;
  next.tokens = ops::gather_rows(state.tokens, rows);
  next.memory = state.memory;
  next.memory_mask = state.memory_mask;
  next.token_set = compose_index_maps(state.token_set, positions);
  return next;
}

template <typename T>
FusionState<T> eliminate_tokens(const FusionState<T>& state, const AttentionScoreMap& normalized, double alpha) {
  if (normalized.size() != state.visual_count()) {
    throw DimensionError("score map has " + std::to_string(normalized.size()) + " values for " +
                         std::to_string(state.visual_count()) + " visual tokens");
  }
  const auto keep = surviving_positions(normalized, alpha);
  if (keep.size() == normalized.size()) {
    return state;
  }
  return keep_positions(state, keep);
}

template <typename T>
FusionState<T> static_eliminate(const FusionState<T>& state, const AttentionScoreMap& scores, std::size_t m) {
  const std::size_t n = state.visual_count();
  if (scores.size() != n) {
    throw DimensionError("score map has " + std::to_string(scores.size()) + " values for " + std::to_string(n) +
                         " visual tokens");
  }
  if (m >= n) {
    throw PreconditionError("static elimination of " + std::to_string(m) + " tokens from " + std::to_string(n));
  }
  if (m == 0) {
    return state;
  }
  // Positions follow increasing original index, so a stable sort on score
  // alone breaks ties towards the lower original index.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores.values[a] < scores.values[b]; });
  std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(m), order.end());
  std::sort(keep.begin(), keep.end());
  return keep_positions(state, keep);
}

std::vector<double> scores_on_grid(const AttentionScoreMap& scores, const TokenSet& tokens) {
  if (scores.size() != tokens.size()) {
    throw DimensionError("score map has " + std::to_string(scores.size()) + " values for " +
                         std::to_string(tokens.size()) + " tokens");
  }
  std::vector<double> full(tokens.total(), 0.0);
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    full[tokens.kept()[p]] = scores.values[p];
  }
  return full;
}

std::vector<double> keep_mask_on_grid(const TokenSet& tokens) {
  std::vector<double> full(tokens.total(), 0.0);
  for (std::size_t idx : tokens.kept()) {
    full[idx] = 1.0;
  }
  return full;
}

template AttentionScoreMap location_attention_scores(const Tensor<float>&);
template AttentionScoreMap location_attention_scores(const Tensor<double>&);
template FusionState<float> keep_positions(const FusionState<float>&, std::span<const std::size_t>);
template FusionState<double> keep_positions(const FusionState<double>&, std::span<const std::size_t>);
template FusionState<float> eliminate_tokens(const FusionState<float>&, const AttentionScoreMap&, double);
template FusionState<double> eliminate_tokens(const FusionState<double>&, const AttentionScoreMap&, double);
template FusionState<float> static_eliminate(const FusionState<float>&, const AttentionScoreMap&, std::size_t);
template FusionState<double> static_eliminate(const FusionState<double>&, const AttentionScoreMap&, std::size_t);

}  // namespace eevg
