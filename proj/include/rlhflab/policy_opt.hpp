#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "rlhflab/policy.hpp"
#include "rlhflab/reward_fn.hpp"

namespace rlhflab {

enum class Algorithm { Sft, VanillaPg, Ppo };
enum class BaselineKind { None, ExactValue, LearnedValue };

std::string to_string(Algorithm a);
std::string to_string(BaselineKind b);

struct OptimConfig {
  Algorithm algorithm = Algorithm::Ppo;
  double step_size = 0.1;
  uint32_t batch_size = 64;
  uint32_t num_iters = 1000;
  double beta = 1.0;          // weight of the KL-to-pre penalty
  double clip_epsilon = 0.2;  // ppo ratio clip
  BaselineKind baseline = BaselineKind::ExactValue;
  double critic_step_size = 0.2;
  uint64_t seed = 0;
};

// State values under a fixed policy. Terminal states always have value 0
// (nothing left to emit), so only non-terminal states are stored.
class ValueFunction {
 public:
  explicit ValueFunction(uint64_t num_nonterminal_states)
      : values_(num_nonterminal_states, 0.0) {}
  double at(StateIndex s) const { return values_[s]; }
  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }

 private:
  std::vector<double> values_;
};

// Per-step reward view used by backward induction and the PPO machinery:
// optional per-token KL cost kl_coeff * (ln rollout(a|s) - ln pre(a|s)),
// charged as a penalty, plus the terminal reward on the last step.
struct ShapedReward {
  const RewardFn* terminal = nullptr;
  const Policy* pre = nullptr;      // required when kl_coeff != 0
  const Policy* rollout = nullptr;  // policy whose log-probs are penalized
  double kl_coeff = 0.0;

  double step(const GenerationMdp& mdp, ContextId c, uint32_t t, uint64_t prefix_value,
              TokenId a) const;
};

// Exact V by backward induction over the prefix tree (terminal rewards only).
ValueFunction exact_value(const GenerationMdp& mdp, const Policy& policy,
                          const RewardFn& terminal_reward);
ValueFunction exact_value_shaped(const GenerationMdp& mdp, const Policy& policy,
                                 const ShapedReward& reward);

// Q(s,a) = r(s,a) + V(child); states addressed as (context, layer, prefix).
double q_value(const GenerationMdp& mdp, const ValueFunction& vf, const ShapedReward& reward,
               ContextId c, uint32_t t, uint64_t prefix_value, TokenId a);
double advantage(const GenerationMdp& mdp, const ValueFunction& vf, const ShapedReward& reward,
                 ContextId c, uint32_t t, uint64_t prefix_value, TokenId a);

// The exact optimum of J_hat(pi) - beta KL(pi || pre):
// pi(o|c) proportional to pre(o|c) * exp(R(c,o)/beta). Scores are normalized
// with log-sum-exp, and per-state logits are recovered by suffix-sum masses
// over the output tree, so the factored policy reproduces the target output
// distribution exactly.
Policy closed_form_policy(const GenerationMdp& mdp, const Policy& pre, const RewardFn& reward,
                          double beta, uint64_t cap = kDefaultEnumerationCap);

// E_c KL(pi(.|c) || pre(.|c)) over output distributions, weighted by d_C (or
// an explicit context weighting).
double kl_to_pre(const GenerationMdp& mdp, const Policy& policy, const Policy& pre,
                 uint64_t cap = kDefaultEnumerationCap);
double kl_to_pre(const GenerationMdp& mdp, const Policy& policy, const Policy& pre,
                 std::span<const double> context_weights, uint64_t cap = kDefaultEnumerationCap);

// One ascent step on the mean demo log-likelihood. step_size 0 returns the
// policy unchanged.
Policy sft_update(const GenerationMdp& mdp, const Policy& policy,
                  const std::vector<Trajectory>& demos, double step_size);
// Gradient of mean demo log-likelihood w.r.t. the logits (exposed for
// equivalence and finite-difference tests).
std::vector<double> sft_gradient(const GenerationMdp& mdp, const Policy& policy,
                                 const std::vector<Trajectory>& demos);

struct PgDiagnostics {
  double mean_reward = 0.0;
  double grad_inf_norm = 0.0;
};

// REINFORCE on a fresh batch of rollouts: mean over the batch of
// G * grad log pi(o|c), with G = R(c,o) minus the chosen baseline.
Policy pg_update(const GenerationMdp& mdp, const Policy& policy, const RewardFn& reward,
                 const OptimConfig& cfg, Rng& rng, ValueFunction* critic = nullptr,
                 PgDiagnostics* diag = nullptr);
// Batch-gradient core of pg_update (exposed for tests).
std::vector<double> pg_gradient(const GenerationMdp& mdp, const Policy& policy,
                                const std::vector<Trajectory>& batch,
                                const ValueFunction* baseline);

struct PpoDiagnostics {
  double mean_reward = 0.0;        // raw terminal reward over the batch
  double mean_shaped_return = 0.0; // includes the KL cost
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double grad_inf_norm = 0.0;
};

// One clipped-surrogate ascent step on a batch rolled out from old_policy.
// The KL-to-pre penalty rides along as a per-token reward cost (see
// ShapedReward), so it shapes the advantages rather than adding a separate
// loss term. Advantages: exact one-step Q-V for ExactValue, critic one-step
// for LearnedValue, shaped return-to-go for None.
Policy ppo_update(const GenerationMdp& mdp, const Policy& policy, const Policy& old_policy,
                  const RewardFn& reward, const Policy& pre, const OptimConfig& cfg, Rng& rng,
                  ValueFunction* critic = nullptr, PpoDiagnostics* diag = nullptr);

struct IterStats {
  uint32_t iter = 0;
  double j_exact = 0.0;  // under eval_reward when given, else under train reward
  double j_hat = 0.0;    // under the training reward
  double kl_to_pre = 0.0;
  double loss = 0.0;
};
using IterCallback = std::function<void(const IterStats&)>;

// Iteration loop for VanillaPg / Ppo starting from a copy of `pre`. The old
// policy is re-snapshotted every iteration. eval_reward (when given) is what
// the j_exact diagnostic column reports against.
Policy train_policy(const GenerationMdp& mdp, const RewardFn& train_reward, const Policy& pre,
                    const OptimConfig& cfg, const RewardFn* eval_reward = nullptr,
                    const IterCallback& cb = nullptr, uint32_t diag_every = 10);

// Same loop shape for SFT on a fixed demo set.
Policy train_policy_sft(const GenerationMdp& mdp, const std::vector<Trajectory>& demos,
                        const Policy& pre, const OptimConfig& cfg,
                        const RewardFn* train_reward = nullptr,
                        const RewardFn* eval_reward = nullptr, const IterCallback& cb = nullptr,
                        uint32_t diag_every = 10);

}  // namespace rlhflab
