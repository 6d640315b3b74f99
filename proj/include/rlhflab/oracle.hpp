#pragma once

#include <filesystem>
#include <variant>
#include <vector>

#include "rlhflab/policy.hpp"
#include "rlhflab/reward_fn.hpp"

namespace rlhflab {

// Ground-truth scorer: a dense |C| x |V|^T table, deterministic, evaluated
// only on finished outputs.
class OracularReward : public RewardFn {
 public:
  OracularReward(uint32_t num_contexts, uint64_t num_outputs, std::vector<double> values);

  double at(ContextId c, OutputIndex o) const override;
  void fill_row(ContextId c, std::span<double> out) const override;
  std::span<const double> row(ContextId c) const;

  uint32_t num_contexts() const { return num_contexts_; }
  uint64_t num_outputs() const { return num_outputs_; }

  void save_csv(const std::filesystem::path& path) const;
  static OracularReward load_csv(const std::filesystem::path& path);

 private:
  uint32_t num_contexts_;
  uint64_t num_outputs_;
  std::vector<double> values_;  // context-major
};

// iid N(mean, stddev^2) per (context, output) cell.
struct GaussianRandomSpec {
  double mean = 0.0;
  double stddev = 1.0;
  uint64_t seed = 0;
};

// `bonus` per occurrence of `token` anywhere in the output; context-blind.
struct TargetTokenSpec {
  TokenId token = 0;
  double bonus = 1.0;
};

// `match_value` per position agreeing with that context's target output.
struct PrefixMatchSpec {
  std::vector<std::vector<TokenId>> targets;  // one per context
  double match_value = 1.0;
};

using RewardSpec = std::variant<GaussianRandomSpec, TargetTokenSpec, PrefixMatchSpec>;

OracularReward make_oracle(const GenerationMdp& mdp, const RewardSpec& spec,
                           uint64_t cap = kDefaultEnumerationCap);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// J(pi) = sum_c d_C(c) sum_o pi(o|c) R(c,o), computed exactly by enumeration.
double exact_performance(const GenerationMdp& mdp, const Policy& policy, const RewardFn& reward,
                         uint64_t cap = kDefaultEnumerationCap);

// Same functional, judged by a model instead of the oracle.
double estimated_performance(const GenerationMdp& mdp, const Policy& policy,
                             const RewardFn& reward_model,
                             uint64_t cap = kDefaultEnumerationCap);

// Sample mean of rollout rewards, with its standard error. num_samples >= 2.
McEstimate mc_performance(const GenerationMdp& mdp, const Policy& policy, const RewardFn& reward,
                          uint64_t num_samples, uint64_t seed);

}  // namespace rlhflab
