#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "eevg/numerics/init.hpp"
#include "eevg/numerics/ops.hpp"

namespace eevg {

/// Projections of one multi-head attention block. Weights are C×C and
/// applied as x·W; biases are 1×C.
template <typename T>
struct AttentionParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t heads = 1;

  std::size_t channels() const { return wq.rows(); }
  std::size_t head_dim() const { return channels() / heads; }

  // Throws ConfigError unless heads ≥ 1 divides channels.
  static AttentionParams init(std::size_t channels, std::size_t heads, Rng& rng);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    visit_impl(*this, prefix, f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    visit_impl(*this, prefix, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    f(p + "wq", s.wq);
    f(p + "bq", s.bq);
    f(p + "wk", s.wk);
    f(p + "bk", s.bk);
    f(p + "wv", s.wv);
    f(p + "bv", s.bv);
    f(p + "wo", s.wo);
    f(p + "bo", s.bo);
  }
};

template <typename T>
struct SelfAttentionResult {
  Var<T> out;
  // heads × (rows − 1): post-softmax attention from query row 0 (the
  // location token) to every other key. The location key's own share is
  // dropped, so each row sums to at most 1.
  Tensor<T> loc_scores;
};

// h-head self-attention with 1/√d scaling per head and output projection.
// Row 0 of x is the location token; x needs at least two rows. Keys whose
// key_mask entry is 0 receive no attention (empty mask: all keys valid).
template <typename T>
SelfAttentionResult<T> multi_head_self_attention(const Var<T>& x, const AttentionParams<T>& p,
                                                 std::span<const std::uint8_t> key_mask = {});

// Queries from `query`, keys and values from `memory`. Memory rows whose mask
// entry is 0 are excluded from every softmax. An empty mask means all rows
// are valid; a mask with no valid row is a PreconditionError.
template <typename T>
Var<T> multi_head_cross_attention(const Var<T>& query, const Var<T>& memory, std::span<const std::uint8_t> mask,
                                  const AttentionParams<T>& p);

}  // namespace eevg
