#include "rlhflab/mdp.hpp"

#include <cmath>
#include <string>

namespace rlhflab {

namespace {

// |V|^T with an overflow guard; the representability ceiling keeps index
// arithmetic in uint64_t safe everywhere downstream.
uint64_t checked_pow(uint32_t base, uint32_t exp) {
  constexpr uint64_t kCeiling = uint64_t{1} << 62;
  uint64_t v = 1;
  for (uint32_t i = 0; i < exp; ++i) {
    if (v > kCeiling / base)
      throw SizeError("output space vocab_size^horizon exceeds representable ceiling 2^62");
    v *= base;
  }
  return v;
}

}  // namespace

GenerationMdp::GenerationMdp(uint32_t vocab_size, uint32_t horizon, uint32_t num_contexts,
                             std::vector<double> context_dist)
    : vocab_size_(vocab_size),
      horizon_(horizon),
      num_contexts_(num_contexts),
      context_dist_(std::move(context_dist)) {
  if (vocab_size_ < 2) throw ContractViolation("vocab_size must be >= 2");
  if (horizon_ < 1) throw ContractViolation("horizon must be >= 1");
  if (num_contexts_ < 1) throw ContractViolation("num_contexts must be >= 1");
  if (context_dist_.size() != num_contexts_)
    throw ContractViolation("context_dist size must equal num_contexts");
  double total = 0.0;
  for (double p : context_dist_) {
    if (!(p >= 0.0)) throw ContractViolation("context_dist entries must be >= 0");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw ContractViolation("context_dist must sum to 1 within 1e-12");

  num_outputs_ = checked_pow(vocab_size_, horizon_);
  layer_offsets_.resize(horizon_ + 1);
  uint64_t acc = 0;
  uint64_t layer = 1;
  for (uint32_t t = 0; t < horizon_; ++t) {
    layer_offsets_[t] = acc;
    acc += layer;
    layer *= vocab_size_;
  }
  layer_offsets_[horizon_] = acc;
  states_per_context_ = acc;
}

GenerationMdp GenerationMdp::uniform_contexts(uint32_t vocab_size, uint32_t horizon,
                                              uint32_t num_contexts) {
  std::vector<double> dist(num_contexts, 1.0 / num_contexts);
  return GenerationMdp(vocab_size, horizon, num_contexts, std::move(dist));
}

void GenerationMdp::validate_context(ContextId c) const {
  if (c >= num_contexts_)
    throw ContractViolation("context id " + std::to_string(c) + " out of range");
}

void GenerationMdp::validate_token(TokenId a) const {
  if (a >= vocab_size_) throw ContractViolation("token id " + std::to_string(a) + " out of range");
}

OutputIndex GenerationMdp::output_index(std::span<const TokenId> output) const {
  if (output.size() != horizon_)
    throw ContractViolation("output length must equal horizon");
  OutputIndex idx = 0;
  for (TokenId a : output) {
    validate_token(a);
    idx = idx * vocab_size_ + a;
  }
  return idx;
}

std::vector<TokenId> GenerationMdp::output_at(OutputIndex index) const {
  if (index >= num_outputs_) throw ContractViolation("output index out of range");
  std::vector<TokenId> out(horizon_);
  for (uint32_t t = horizon_; t-- > 0;) {
    out[t] = static_cast<TokenId>(index % vocab_size_);
    index /= vocab_size_;
  }
  return out;
}

StateIndex GenerationMdp::state_index(ContextId c, std::span<const TokenId> prefix) const {
  validate_context(c);
  if (prefix.size() >= layer_offsets_.size())
    throw ContractViolation("prefix length must be < horizon for a non-terminal state");
  uint64_t value = 0;
  for (TokenId a : prefix) {
    validate_token(a);
    value = value * vocab_size_ + a;
  }
  return c * states_per_context_ + layer_offsets_[prefix.size()] + value;
}

StateRef step(const GenerationMdp& mdp, const StateRef& s, TokenId a) {
  mdp.validate_context(s.context);
  if (mdp.is_terminal(s)) throw ContractViolation("step on a terminal state");
  mdp.validate_token(a);
  StateRef next = s;
  next.prefix.push_back(a);
  return next;
}

void check_enumeration_cap(const GenerationMdp& mdp, uint64_t cap) {
  if (mdp.num_outputs() > cap)
    throw SizeError("enumeration of " + std::to_string(mdp.num_outputs()) +
                    " outputs exceeds cap " + std::to_string(cap));
}

std::vector<std::vector<TokenId>> enumerate_outputs(const GenerationMdp& mdp, uint64_t cap) {
  check_enumeration_cap(mdp, cap);
  std::vector<std::vector<TokenId>> all;
  all.reserve(mdp.num_outputs());
  for (OutputIndex i = 0; i < mdp.num_outputs(); ++i) all.push_back(mdp.output_at(i));
  return all;
}

}  // namespace rlhflab
