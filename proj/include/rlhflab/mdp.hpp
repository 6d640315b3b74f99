#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rlhflab/errors.hpp"

namespace rlhflab {

using TokenId = uint32_t;
using ContextId = uint32_t;
using OutputIndex = uint64_t;
using StateIndex = uint64_t;

inline constexpr uint64_t kDefaultEnumerationCap = 1'000'000;

// A state mid-generation: the prompt plus the tokens emitted so far.
struct StateRef {
  ContextId context = 0;
  std::vector<TokenId> prefix;
};

struct Trajectory {
  ContextId context = 0;
  std::vector<TokenId> output;
  double terminal_reward = 0.0;
};

// Episodic token-emission process: a context is drawn from context_dist, the
// policy appends exactly `horizon` tokens from a vocabulary of size
// `vocab_size`, and the episode ends. Transitions are deterministic
// (append-token), reward is attached elsewhere. Contexts are opaque ids
// 0..num_contexts-1.
//
// Canonical output order is lexicographic, which coincides with numeric order
// of the base-|V| reading of the token string; output_index/output_at are
// that bijection. Non-terminal states get dense indices grouped by context,
// then by prefix length, then lexicographically.
class GenerationMdp {
 public:
  GenerationMdp(uint32_t vocab_size, uint32_t horizon, uint32_t num_contexts,
                std::vector<double> context_dist);

  static GenerationMdp uniform_contexts(uint32_t vocab_size, uint32_t horizon,
                                        uint32_t num_contexts);

  uint32_t vocab_size() const { return vocab_size_; }
  uint32_t horizon() const { return horizon_; }
  uint32_t num_contexts() const { return num_contexts_; }
  const std::vector<double>& context_dist() const { return context_dist_; }

  // |V|^T
  uint64_t num_outputs() const { return num_outputs_; }
  // 1 + |V| + ... + |V|^(T-1), states with room for at least one more token
  uint64_t states_per_context() const { return states_per_context_; }
  uint64_t num_nonterminal_states() const { return states_per_context_ * num_contexts_; }

  bool is_terminal(const StateRef& s) const { return s.prefix.size() >= horizon_; }

  OutputIndex output_index(std::span<const TokenId> output) const;
  std::vector<TokenId> output_at(OutputIndex index) const;

  // Dense index of a non-terminal state.
  StateIndex state_index(ContextId c, std::span<const TokenId> prefix) const;
  StateIndex state_index(const StateRef& s) const { return state_index(s.context, s.prefix); }
  // First state index of the length-t layer within one context's block.
  uint64_t layer_offset(uint32_t t) const { return layer_offsets_[t]; }

  void validate_context(ContextId c) const;
  void validate_token(TokenId a) const;

 private:
  uint32_t vocab_size_;
  uint32_t horizon_;
  uint32_t num_contexts_;
  std::vector<double> context_dist_;
  uint64_t num_outputs_;
  uint64_t states_per_context_;
  std::vector<uint64_t> layer_offsets_;  // size horizon_+1; last = states_per_context_
};

// Appends one token. Throws ContractViolation on a terminal state or an
// out-of-range token/context.
StateRef step(const GenerationMdp& mdp, const StateRef& s, TokenId a);

// Every output in canonical order. Throws SizeError (naming the cap) if
// |V|^T exceeds `cap`.
std::vector<std::vector<TokenId>> enumerate_outputs(const GenerationMdp& mdp,
                                                    uint64_t cap = kDefaultEnumerationCap);

void check_enumeration_cap(const GenerationMdp& mdp, uint64_t cap = kDefaultEnumerationCap);

}  // namespace rlhflab
