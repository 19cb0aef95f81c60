#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace eevg {

/// Surviving visual tokens, identified by their original patch index.
///
/// kept() is strictly increasing and never empty. position_of() is the
/// inverse map: original index → row in the current token list, undefined
/// (nullopt) exactly for eliminated indices.
class TokenSet {
 public:
  TokenSet() = default;
  // Throws IndexError on out-of-range or non-increasing indices and
  // PreconditionError on an empty list.
  TokenSet(std::vector<std::size_t> kept, std::size_t total);

  static TokenSet all(std::size_t total);

  std::span<const std::size_t> kept() const noexcept { return kept_; }
  std::size_t size() const noexcept { return kept_.size(); }
  std::size_t total() const noexcept { return total_; }
  std::optional<std::size_t> position_of(std::size_t original) const;
  bool contains(std::size_t original) const { return position_of(original).has_value(); }

  friend bool operator==(const TokenSet& a, const TokenSet& b) { return a.total_ == b.total_ && a.kept_ == b.kept_; }

 private:
  std::vector<std::size_t> kept_;
  std::vector<std::int64_t> position_;
  std::size_t total_ = 0;
};

// Keeps outer.kept()[p] for each p in inner_positions (strictly increasing
// positions into the outer list).
TokenSet compose_index_maps(const TokenSet& outer, std::span<const std::size_t> inner_positions);

}  // namespace eevg
