#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rlhflab/mdp.hpp"
#include "rlhflab/reward_fn.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

enum class PolicyRole { Pre, Rlhf, Star };

std::string to_string(PolicyRole role);

// Tabular softmax policy: one logit row per non-terminal state (dense state
// indexing from GenerationMdp), one column per token. Rows are normalized
// with max subtraction so extreme logits stay finite.
class Policy {
 public:
  Policy(const GenerationMdp& mdp, PolicyRole role = PolicyRole::Pre);

  static Policy uniform(const GenerationMdp& mdp, PolicyRole role = PolicyRole::Pre);
  static Policy random_logits(const GenerationMdp& mdp, uint64_t seed, double scale,
                              PolicyRole role = PolicyRole::Pre);

  uint32_t vocab_size() const { return vocab_size_; }
  uint32_t horizon() const { return horizon_; }
  uint32_t num_contexts() const { return num_contexts_; }
  uint64_t num_states() const { return logits_.size() / vocab_size_; }

  PolicyRole role() const { return role_; }
  void set_role(PolicyRole role) { role_ = role; }

  std::span<const double> logits() const { return logits_; }
  std::span<double> mutable_logits() { return logits_; }
  std::span<const double> logit_row(StateIndex s) const {
    return std::span<const double>(logits_).subspan(s * vocab_size_, vocab_size_);
  }

  // pi(.|s): softmax of the state's logit row.
  void fill_probs(StateIndex s, std::span<double> out) const;
  std::vector<double> probs(StateIndex s) const;
  void fill_log_probs(StateIndex s, std::span<double> out) const;
  double log_prob(StateIndex s, TokenId a) const;

  // pi(o|c) over all |V|^T outputs in canonical order, by sweeping the prefix
  // tree level by level. Callers enumerate, so they check the cap first.
  std::vector<double> output_distribution(const GenerationMdp& mdp, ContextId c) const;
  std::vector<double> log_output_distribution(const GenerationMdp& mdp, ContextId c) const;
  double log_prob_output(const GenerationMdp& mdp, ContextId c,
                         std::span<const TokenId> output) const;

  void save_csv(const std::filesystem::path& path) const;
  static Policy load_csv(const GenerationMdp& mdp, const std::filesystem::path& path);

 private:
  uint32_t vocab_size_;
  uint32_t horizon_;
  uint32_t num_contexts_;
  PolicyRole role_;
  std::vector<double> logits_;
};

// 0.5 * L1 between two distributions of equal length.
double tv_distance(std::span<const double> p, std::span<const double> q);

// Samples a context from d_C then tokens from the policy. Bit-exact for a
// given engine state. terminal_reward is left at 0 unless a reward is given.
Trajectory rollout(const GenerationMdp& mdp, const Policy& policy, Rng& rng);
Trajectory rollout(const GenerationMdp& mdp, const Policy& policy, Rng& rng,
                   const RewardFn& reward);
Trajectory rollout(const GenerationMdp& mdp, const Policy& policy, uint64_t seed);

}  // namespace rlhflab
