#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "rlhflab/feedback.hpp"
#include "rlhflab/reward_fn.hpp"

namespace rlhflab {

enum class ModelClass { Tabular, Linear };
enum class FeatureKind { None, TokenCounts, PositionalOnehot, ContextCrossed };
enum class Objective { Mse, BtNll };

std::string to_string(ModelClass c);
std::string to_string(FeatureKind k);
std::string to_string(Objective o);

// Learned stand-in for the oracle. Tabular: one parameter per (context,
// output) cell, so it can represent anything but generalizes nowhere.
// Linear: w . phi(c, o) with a fixed feature map:
//   token_counts       |V| features, occurrence count of each token
//   positional_onehot  T*|V| features, indicator of the token at each slot
//   context_crossed    positional_onehot replicated per context (|C|*T*|V|)
// token_counts and positional_onehot ignore the context on purpose; only
// context_crossed can express context-dependent rewards.
class RewardModel : public RewardFn {
 public:
  static RewardModel tabular(const GenerationMdp& mdp);
  static RewardModel linear(const GenerationMdp& mdp, FeatureKind features);

  ModelClass model_class() const { return class_; }
  FeatureKind feature_kind() const { return features_; }
  size_t num_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }

  double at(ContextId c, OutputIndex o) const override;
  void fill_row(ContextId c, std::span<double> out) const override;

  // grad += coeff * d at(c,o) / d params
  void accumulate_grad(ContextId c, OutputIndex o, double coeff, std::span<double> grad) const;

  void save_csv(const std::filesystem::path& path) const;
  static RewardModel load_csv(const GenerationMdp& mdp, const std::filesystem::path& path);

 private:
  RewardModel(ModelClass cls, FeatureKind features, uint32_t vocab_size, uint32_t horizon,
              uint32_t num_contexts, uint64_t num_outputs);
  void fill_features(ContextId c, OutputIndex o, std::span<double> feat) const;

  ModelClass class_;
  FeatureKind features_;
  uint32_t vocab_size_;
  uint32_t horizon_;
  uint32_t num_contexts_;
  uint64_t num_outputs_;
  std::vector<double> params_;  // zero-initialized
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// sum_i (R_phi(c_i,o_i) - r_i)^2 + l2 * |phi|^2  (sum, not mean)
LossGrad mse_loss_and_grad(const RewardModel& model, const std::vector<RatingDatum>& ratings,
                           double l2);

// sum_i softplus(-(R_phi(c_i,w_i) - R_phi(c_i,l_i))) + l2 * |phi|^2
LossGrad bt_nll_and_grad(const RewardModel& model, const std::vector<PreferenceDatum>& prefs,
                         double l2);

struct TrainConfig {
  Objective objective = Objective::Mse;
  double step_size = 0.1;
  uint64_t num_epochs = 1000;
  // Absent means the objective's default: 0 for MSE, 1e-4 for BT-NLL.
  std::optional<double> l2_weight;
  double convergence_tol = 1e-10;
  uint64_t seed = 0;
};

double resolved_l2(const TrainConfig& cfg);

struct TrainResult {
  uint64_t epochs_run = 0;
  double final_loss = 0.0;
  double final_grad_inf = 0.0;
  bool converged = false;
  std::vector<double> loss_trace;
};

// Full-batch gradient descent from the zero initialization. Stops early once
// the gradient sup-norm drops below convergence_tol. A non-finite loss or
// gradient throws TrainingError naming the epoch.
TrainResult train(RewardModel& model, const FeedbackDataset& dataset, const TrainConfig& cfg);

struct GeneralizationReport {
  double in_dist_mse = 0.0;
  std::optional<double> ood_mse;  // absent when every (c,o) pair is covered
  uint64_t in_dist_count = 0;
  uint64_t ood_count = 0;
};

GeneralizationReport generalization_report(const GenerationMdp& mdp, const RewardModel& model,
                                           const OracularReward& oracle,
                                           const FeedbackDataset& dataset);

// Recovery error modulo the per-context gauge: max |centered model row -
// centered oracle row| over all cells, where centering subtracts each row's
// mean.
double centered_recovery_error(const GenerationMdp& mdp, const RewardModel& model,
                               const OracularReward& oracle);

}  // namespace rlhflab
