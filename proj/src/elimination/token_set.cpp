#include "eevg/elimination/token_set.hpp"

#include <numeric>
#include <string>

#include "eevg/errors.hpp"

namespace eevg {

TokenSet::TokenSet(std::vector<std::size_t> kept, std::size_t total)
    : kept_(std::move(kept)), position_(total, -1), total_(total) {
  if (kept_.empty()) {
    throw PreconditionError("token set must keep at least one token");
  }
  for (std::size_t j = 0; j < kept_.size(); ++j) {
    if (kept_[j] >= total_) {
      throw IndexError("token index " + std::to_string(kept_[j]) + " out of range for " + std::to_string(total_) +
                       " tokens");
    }
    if (j > 0 && kept_[j] <= kept_[j - 1]) {
      throw IndexError("token indices must be strictly increasing");
    }
    position_[kept_[j]] = static_cast<std::int64_t>(j);
  }
}

TokenSet TokenSet::all(std::size_t total) {
  std::vector<std::size_t> kept(total);
  std::iota(kept.begin(), kept.end(), std::size_t{0});
  return TokenSet(std::move(kept), total);
}

std::optional<std::size_t> TokenSet::position_of(std::size_t original) const {
  if (original >= total_ || position_[original] < 0) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(position_[original]);
}

TokenSet compose_index_maps(const TokenSet& outer, std::span<const std::size_t> inner_positions) {
  std::vector<std::size_t> kept;
  kept.reserve(inner_positions.size());
  for (std::size_t j = 0; j < inner_positions.size(); ++j) {
    const std::size_t p = inner_positions[j];
    if (p >= outer.size()) {
      throw IndexError("position " + std::to_string(p) + " out of range for " + std::to_string(outer.size()) +
                       " surviving tokens");
    }
    if (j > 0 && p <= inner_positions[j - 1]) {
      throw IndexError("positions must be strictly increasing");
    }
    kept.push_back(outer.kept()[p]);
  }
  return TokenSet(std::move(kept), outer.total());
}

}  // namespace eevg
