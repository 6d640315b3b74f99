#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlhflab/analysis.hpp"
#include "rlhflab/oracle.hpp"

namespace rlhflab {

// Everything a run needs, in one validated struct. Unknown JSON keys are
// rejected (never silently ignored) and every value is range-checked up
// front, so a typo'd experiment fails before any stage runs.
struct ExperimentConfig {
  struct Mdp {
    uint32_t vocab_size = 2;
    uint32_t horizon = 2;
    uint32_t num_contexts = 2;
    std::vector<double> context_dist;  // empty = uniform
  } mdp;

  struct Oracle {
    std::string kind = "gaussian_random";  // | target_token | prefix_match
    double mean = 0.0;
    double stddev = 1.0;
    uint64_t seed = 1;
    uint32_t token = 0;
    double bonus = 1.0;
    std::vector<std::vector<uint32_t>> targets;
    double match_value = 1.0;
  } oracle;

  struct Feedback {
    std::string mode = "ratings";  // | preferences
    double kappa = 1.0;
    uint64_t outputs_per_context = 0;  // 0 = all outputs
    uint64_t samples_per_pair = 200;
    uint64_t seed = 7;
  } feedback;

  struct RewardModelCfg {
    std::string model_class = "tabular";  // | linear
    std::string features = "positional_onehot";
    std::string objective = "mse";  // | bt_nll
    double step_size = 0.05;
    uint64_t num_epochs = 2000;
    std::optional<double> l2_weight;  // absent = objective default
    double convergence_tol = 1e-10;
    uint64_t seed = 3;
  } reward_model;

  struct PolicyCfg {
    std::string algorithm = "ppo";  // | vanilla_pg | sft
    double step_size = 0.1;
    uint32_t batch_size = 64;
    uint32_t num_iters = 300;
    double beta = 1.0;
    double clip_epsilon = 0.2;
    std::string baseline = "exact_value";  // | none | learned_value
    double critic_step_size = 0.2;
    uint64_t seed = 11;
    std::string pre = "uniform";  // | random_logits
    double pre_scale = 0.5;
    uint64_t pre_seed = 0;
    uint32_t diag_every = 10;
  } policy;

  struct Analysis {
    std::vector<double> beta_grid = {0.1, 1.0, 10.0, 100.0};
    std::vector<double> kappa_grid = {0.5, 1.0};
    std::vector<uint64_t> feedback_size_grid = {2, 4};
    std::vector<uint64_t> seeds = {1, 2, 3};
    std::string eval_dist = "uniform";  // | context_dist
  } analysis;

  std::string output_dir = "out";

  // Materialized domain objects / enums.
  GenerationMdp make_mdp() const;
  RewardSpec make_reward_spec() const;
  Policy make_pre_policy(const GenerationMdp& mdp) const;
  TrainConfig make_train_config() const;
  ModelClass model_class() const;
  FeatureKind feature_kind() const;
  OptimConfig make_optim_config() const;
  std::vector<double> eval_weights(const GenerationMdp& mdp) const;
};

// Parse + validate. Throws ConfigError naming the offending key.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig config_from_file(const std::filesystem::path& path);

// Full round-trippable form with every default filled in; key order is
// canonical (alphabetical), so equal configs serialize byte-identically.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// `section.key=value` overrides applied to raw JSON before validation.
void apply_override(nlohmann::json& j, const std::string& spec);

// RLHF_LAB_SEED: replaces each stage seed with env+offset (oracle +0,
// feedback +1, reward model +2, policy +3).
void apply_env_seed(ExperimentConfig& cfg, uint64_t seed);

}  // namespace rlhflab
