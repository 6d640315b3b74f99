#pragma once

#include <set>
#include <string>
#include <vector>

#include "rlhflab/policy_opt.hpp"
#include "rlhflab/reward_model.hpp"

namespace rlhflab {

// Alignment gap between the policy optimized against the oracle and the one
// optimized against a learned reward, both through the same closed-form
// KL-regularized objective, both judged by the oracle.
struct GapReport {
  double j_star = 0.0;   // J(pi*_rlhf), closed form on R*
  double j_rlhf = 0.0;   // J(pi_rlhf), closed form on R_phi
  double delta_j = 0.0;  // |j_star - j_rlhf|
  // Signed per-context split of j_star - j_rlhf by reward-data coverage.
  double in_dist_contribution = 0.0;
  double ood_contribution = 0.0;
  std::set<ContextId> eval_contexts;  // contexts with nonzero eval weight
  std::set<ContextId> ood_contexts;   // eval contexts outside C_rew
  double kl_rlhf_to_pre = 0.0;        // under the eval weighting
};

// eval_dist: weighting over contexts for the evaluation functional; empty
// means uniform over all contexts. covered_contexts: C_rew, the contexts the
// reward model saw feedback for.
GapReport performance_gap(const GenerationMdp& mdp, const OracularReward& oracle,
                          const RewardFn& reward_model, const Policy& pre, double beta,
                          const std::set<ContextId>& covered_contexts,
                          std::span<const double> eval_dist = {});

struct SweepPoint {
  double axis_value = 0.0;
  uint64_t seed = 0;
  double delta_j = 0.0;
  double j_star = 0.0;
  double j_rlhf = 0.0;
  double kl_to_pre = 0.0;
  // 0 when every pair is covered (no out-of-distribution cells remain).
  double ood_mse = 0.0;
};

struct SweepAggregate {
  double axis_value = 0.0;
  double mean_delta_j = 0.0;
  double stderr_delta_j = 0.0;
  double mean_ood_mse = 0.0;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepPoint> points;          // grid-major, then seed order
  std::vector<SweepAggregate> aggregates;  // one per grid value
};

// Feedback synthesis + reward-model training recipe shared by the sweeps.
struct SweepSettings {
  uint64_t outputs_per_context = 0;  // ratings per covered context; 0 = all
  uint64_t samples_per_pair = 200;   // BT draws per pair (bt_nll objective)
  double beta = 1.0;
  ModelClass model_class = ModelClass::Tabular;
  FeatureKind features = FeatureKind::None;
  TrainConfig train;  // objective, step size, epochs, l2, tol
};

// First ceil(kappa * |C|) contexts of a seeded shuffle, ascending; kappa must
// be in (0, 1].
std::vector<ContextId> choose_covered_contexts(const GenerationMdp& mdp, double kappa,
                                               uint64_t seed);

// One (kappa, seed) cell: cover ceil(kappa |C|) contexts chosen by the seed,
// rate outputs, fit, and report the gap. kappa must be in (0, 1].
SweepPoint coverage_cell(const GenerationMdp& mdp, const OracularReward& oracle,
                         const Policy& pre, double kappa, uint64_t seed,
                         const SweepSettings& settings);
SweepResult coverage_sweep(const GenerationMdp& mdp, const OracularReward& oracle,
                           const Policy& pre, const std::vector<double>& kappa_grid,
                           const std::vector<uint64_t>& seeds, const SweepSettings& settings);

// One (outputs_per_context, seed) cell at full context coverage.
SweepPoint feedback_size_cell(const GenerationMdp& mdp, const OracularReward& oracle,
                              const Policy& pre, uint64_t outputs_per_context, uint64_t seed,
                              const SweepSettings& settings);
SweepResult feedback_size_sweep(const GenerationMdp& mdp, const OracularReward& oracle,
                                const Policy& pre, const std::vector<uint64_t>& size_grid,
                                const std::vector<uint64_t>& seeds,
                                const SweepSettings& settings);

// Exact beta trade-off curve for a fixed trained model; no sampling, so no
// seeds. Grid must be strictly increasing and positive.
SweepResult beta_sweep(const GenerationMdp& mdp, const OracularReward& oracle,
                       const RewardFn& reward_model, const Policy& pre,
                       const std::vector<double>& beta_grid,
                       const std::set<ContextId>& covered_contexts);

struct SftVsPgRow {
  uint64_t seed = 0;
  double j_sft_crew = 0.0;
  double j_sft_cprime = 0.0;
  double j_pg_crew = 0.0;
  double j_pg_cprime = 0.0;
};

struct SftVsPgResult {
  std::vector<SftVsPgRow> rows;
  double j_opt_crew = 0.0;  // best deterministic J on the covered contexts
};

struct SftVsPgSettings {
  uint64_t demo_budget = 64;
  uint32_t sft_iters = 500;
  double sft_step_size = 0.5;
  OptimConfig pg;  // algorithm forced to VanillaPg
};

// Demonstrations come from the oracle-optimal deterministic policy on C_rew;
// PG trains against exact oracle rewards on the same contexts. Both policies
// are scored on C_rew and on its complement.
SftVsPgResult sft_vs_pg(const GenerationMdp& mdp, const OracularReward& oracle, const Policy& pre,
                        const std::set<ContextId>& covered_contexts,
                        const std::vector<uint64_t>& seeds, const SftVsPgSettings& settings);

}  // namespace rlhflab
