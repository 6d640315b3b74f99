#include "rlhflab/reward_model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "rlhflab/csv.hpp"
#include "rlhflab/kernels.hpp"

namespace rlhflab {

std::string to_string(ModelClass c) { return c == ModelClass::Tabular ? "tabular" : "linear"; }

std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::None: return "none";
    case FeatureKind::TokenCounts: return "token_counts";
    case FeatureKind::PositionalOnehot: return "positional_onehot";
    case FeatureKind::ContextCrossed: return "context_crossed";
  }
  return "none";
}

std::string to_string(Objective o) { return o == Objective::Mse ? "mse" : "bt_nll"; }

RewardModel::RewardModel(ModelClass cls, FeatureKind features, uint32_t vocab_size,
                         uint32_t horizon, uint32_t num_contexts, uint64_t num_outputs)
    : class_(cls),
      features_(features),
      vocab_size_(vocab_size),
      horizon_(horizon),
      num_contexts_(num_contexts),
      num_outputs_(num_outputs) {
  size_t dim = 0;
  if (class_ == ModelClass::Tabular) {
    dim = num_contexts_ * num_outputs_;
  } else {
    switch (features_) {
      case FeatureKind::TokenCounts: dim = vocab_size_; break;
      case FeatureKind::PositionalOnehot: dim = static_cast<size_t>(horizon_) * vocab_size_; break;
      case FeatureKind::ContextCrossed:
        dim = static_cast<size_t>(num_contexts_) * horizon_ * vocab_size_;
        break;
      case FeatureKind::None:
        throw ContractViolation("linear reward model needs a feature map");
    }
  }
  params_.assign(dim, 0.0);
}

RewardModel RewardModel::tabular(const GenerationMdp& mdp) {
  check_enumeration_cap(mdp);
  return RewardModel(ModelClass::Tabular, FeatureKind::None, mdp.vocab_size(), mdp.horizon(),
                     mdp.num_contexts(), mdp.num_outputs());
}

RewardModel RewardModel::linear(const GenerationMdp& mdp, FeatureKind features) {
  return RewardModel(ModelClass::Linear, features, mdp.vocab_size(), mdp.horizon(),
                     mdp.num_contexts(), mdp.num_outputs());
}

void RewardModel::fill_features(ContextId c, OutputIndex o, std::span<double> feat) const {
  std::memset(feat.data(), 0, feat.size() * sizeof(double));
  uint64_t rem = o;
  // Decode most-significant token first; position t's digit has weight
  // |V|^(T-1-t).
  for (uint32_t t = horizon_; t-- > 0;) {
    auto a = static_cast<uint32_t>(rem % vocab_size_);
    rem /= vocab_size_;
    switch (features_) {
      case FeatureKind::TokenCounts: feat[a] += 1.0; break;
      case FeatureKind::PositionalOnehot: feat[static_cast<size_t>(t) * vocab_size_ + a] = 1.0; break;
      case FeatureKind::ContextCrossed:
        feat[(static_cast<size_t>(c) * horizon_ + t) * vocab_size_ + a] = 1.0;
        break;
      case FeatureKind::None: break;
    }
  }
}

double RewardModel::at(ContextId c, OutputIndex o) const {
  if (c >= num_contexts_ || o >= num_outputs_)
    throw ContractViolation("reward model lookup out of range");
  if (class_ == ModelClass::Tabular) return params_[c * num_outputs_ + o];
  std::vector<double> feat(params_.size());
  fill_features(c, o, feat);
  return kernels::dot(params_.data(), feat.data(), feat.size());
}

void RewardModel::fill_row(ContextId c, std::span<double> out) const {
  if (c >= num_contexts_ || out.size() != num_outputs_)
    throw ContractViolation("reward model fill_row out of range");
  if (class_ == ModelClass::Tabular) {
    std::memcpy(out.data(), params_.data() + c * num_outputs_, num_outputs_ * sizeof(double));
    return;
  }
  std::vector<double> feat(params_.size());
  for (OutputIndex o = 0; o < num_outputs_; ++o) {
    fill_features(c, o, feat);
    out[o] = kernels::dot(params_.data(), feat.data(), feat.size());
  }
}

void RewardModel::accumulate_grad(ContextId c, OutputIndex o, double coeff,
                                  std::span<double> grad) const {
  if (grad.size() != params_.size())
    throw ContractViolation("accumulate_grad: wrong gradient size");
  if (class_ == ModelClass::Tabular) {
    grad[c * num_outputs_ + o] += coeff;
    return;
  }
  std::vector<double> feat(params_.size());
  fill_features(c, o, feat);
  kernels::axpy(grad.data(), coeff, feat.data(), feat.size());
}

void RewardModel::save_csv(const std::filesystem::path& path) const {
  csv::Table t;
  t.header = {"model_class", "feature_kind", "param_index", "value"};
  t.rows.reserve(params_.size());
  std::string cls = to_string(class_);
  std::string feat = to_string(features_);
  for (size_t i = 0; i < params_.size(); ++i)
    t.rows.push_back({cls, feat, std::to_string(i), csv::format_double(params_[i])});
  csv::write_table(path, t);
}

RewardModel RewardModel::load_csv(const GenerationMdp& mdp, const std::filesystem::path& path) {
  csv::Table t = csv::read_table(path);
  if (t.rows.empty()) throw ContractViolation("reward model checkpoint has no rows");
  const std::string& cls = t.rows[0][0];
  const std::string& feat = t.rows[0][1];
  RewardModel model = [&]() {
    if (cls == "tabular") return RewardModel::tabular(mdp);
    if (cls != "linear") throw ContractViolation("unknown model class '" + cls + "'");
    if (feat == "token_counts") return RewardModel::linear(mdp, FeatureKind::TokenCounts);
    if (feat == "positional_onehot")
      return RewardModel::linear(mdp, FeatureKind::PositionalOnehot);
    if (feat == "context_crossed") return RewardModel::linear(mdp, FeatureKind::ContextCrossed);
    throw ContractViolation("unknown feature kind '" + feat + "'");
  }();
  if (t.rows.size() != model.params_.size())
    throw ContractViolation("reward model checkpoint row count does not match the mdp shape");
  for (const auto& row : t.rows) {
    if (row.size() != 4) throw ContractViolation("reward model checkpoint row must have 4 fields");
    if (row[0] != cls || row[1] != feat)
      throw ContractViolation("reward model checkpoint mixes model kinds");
    auto i = static_cast<size_t>(csv::parse_int(row[2]));
    if (i >= model.params_.size())
      throw ContractViolation("reward model checkpoint index out of range");
    model.params_[i] = csv::parse_double(row[3]);
  }
  return model;
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void add_l2(const RewardModel& model, double l2, LossGrad& out) {
  if (l2 == 0.0) return;
  auto p = model.params();
  out.loss += l2 * kernels::dot(p.data(), p.data(), p.size());
  kernels::axpy(out.grad.data(), 2.0 * l2, p.data(), p.size());
}

}  // namespace

LossGrad mse_loss_and_grad(const RewardModel& model, const std::vector<RatingDatum>& ratings,
                           double l2) {
  LossGrad out;
  out.grad.assign(model.num_params(), 0.0);
  for (const auto& d : ratings) {
    double resid = model.at(d.context, d.output) - d.rating;
    out.loss += resid * resid;
    model.accumulate_grad(d.context, d.output, 2.0 * resid, out.grad);
  }
  add_l2(model, l2, out);
  return out;
}

LossGrad bt_nll_and_grad(const RewardModel& model, const std::vector<PreferenceDatum>& prefs,
                         double l2) {
  LossGrad out;
  out.grad.assign(model.num_params(), 0.0);
  for (const auto& d : prefs) {
    double gap = model.at(d.context, d.winner) - model.at(d.context, d.loser);
    out.loss += softplus(-gap);
    double coeff = -sigmoid(-gap);  // d/dgap of -log sigmoid(gap)
    model.accumulate_grad(d.context, d.winner, coeff, out.grad);
    model.accumulate_grad(d.context, d.loser, -coeff, out.grad);
  }
  add_l2(model, l2, out);
  return out;
}

double resolved_l2(const TrainConfig& cfg) {
  if (cfg.l2_weight.has_value()) {
    if (!(*cfg.l2_weight >= 0.0)) throw ContractViolation("l2_weight must be >= 0");
    return *cfg.l2_weight;
  }
  return cfg.objective == Objective::BtNll ? 1e-4 : 0.0;
}

TrainResult train(RewardModel& model, const FeedbackDataset& dataset, const TrainConfig& cfg) {
  if (!(cfg.step_size > 0.0)) throw ContractViolation("step_size must be > 0");
  if (cfg.objective == Objective::Mse && dataset.ratings().empty())
    throw ContractViolation("mse objective requires ratings");
  if (cfg.objective == Objective::BtNll && dataset.preferences().empty())
    throw ContractViolation("bt_nll objective requires preferences");
  double l2 = resolved_l2(cfg);

  TrainResult result;
  result.loss_trace.reserve(cfg.num_epochs);
  for (uint64_t epoch = 0; epoch < cfg.num_epochs; ++epoch) {
    LossGrad lg = cfg.objective == Objective::Mse
                      ? mse_loss_and_grad(model, dataset.ratings(), l2)
                      : bt_nll_and_grad(model, dataset.preferences(), l2);
    if (!std::isfinite(lg.loss))
      throw TrainingError("reward model training diverged: non-finite loss",
                          static_cast<long long>(epoch));
    double gmax = 0.0;
    for (double g : lg.grad) {
      if (!std::isfinite(g))
        throw TrainingError("reward model training diverged: non-finite gradient",
                            static_cast<long long>(epoch));
      gmax = std::max(gmax, std::fabs(g));
    }
    result.loss_trace.push_back(lg.loss);
    result.final_loss = lg.loss;
    result.final_grad_inf = gmax;
    result.epochs_run = epoch + 1;
    if (gmax < cfg.convergence_tol) {
      result.converged = true;
      break;
    }
    kernels::axpy(model.mutable_params().data(), -cfg.step_size, lg.grad.data(),
                  model.num_params());
  }
  return result;
}

GeneralizationReport generalization_report(const GenerationMdp& mdp, const RewardModel& model,
                                           const OracularReward& oracle,
                                           const FeedbackDataset& dataset) {
  if (dataset.empty())
    throw ContractViolation("generalization_report needs a non-empty dataset");
  check_enumeration_cap(mdp);
  GeneralizationReport rep;
  double in_sum = 0.0;
  double ood_sum = 0.0;
  std::vector<double> pred(mdp.num_outputs());
  const std::set<OutputIndex> kNone;
  for (uint32_t c = 0; c < mdp.num_contexts(); ++c) {
    model.fill_row(c, pred);
    auto truth = oracle.row(c);
    auto it = dataset.covered_outputs().find(c);
    const std::set<OutputIndex>& covered = it == dataset.covered_outputs().end() ? kNone
                                                                                 : it->second;
    for (OutputIndex o = 0; o < mdp.num_outputs(); ++o) {
      double d = pred[o] - truth[o];
      if (covered.count(o)) {
        in_sum += d * d;
        ++rep.in_dist_count;
      } else {
        ood_sum += d * d;
        ++rep.ood_count;
      }
    }
  }
  rep.in_dist_mse = rep.in_dist_count ? in_sum / static_cast<double>(rep.in_dist_count) : 0.0;
  if (rep.ood_count > 0) rep.ood_mse = ood_sum / static_cast<double>(rep.ood_count);
  return rep;
}

double centered_recovery_error(const GenerationMdp& mdp, const RewardModel& model,
                               const OracularReward& oracle) {
  check_enumeration_cap(mdp);
  uint64_t n = mdp.num_outputs();
  std::vector<double> pred(n);
  double worst = 0.0;
  for (uint32_t c = 0; c < mdp.num_contexts(); ++c) {
    model.fill_row(c, pred);
    auto truth = oracle.row(c);
    double mp = kernels::sum(pred.data(), n) / static_cast<double>(n);
    double mt = kernels::sum(truth.data(), n) / static_cast<double>(n);
    for (uint64_t o = 0; o < n; ++o)
      worst = std::max(worst, std::fabs((pred[o] - mp) - (truth[o] - mt)));
  }
  return worst;
}

}  // namespace rlhflab
