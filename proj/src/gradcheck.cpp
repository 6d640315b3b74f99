#include "rlhflab/gradcheck.hpp"

#include <cmath>

#include "rlhflab/feedback.hpp"
#include "rlhflab/oracle.hpp"
#include "rlhflab/policy_opt.hpp"
#include "rlhflab/reward_model.hpp"

namespace rlhflab {

namespace {

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;

struct Shape {
  uint32_t vocab, horizon, contexts;
};
constexpr Shape kShapes[] = {{2, 1, 1}, {2, 2, 2}, {3, 2, 3}, {2, 3, 2}};

double rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
}

// Compares `analytic` against central differences of `loss` taken by bumping
// `params[i]`; records the first offending coordinate.
template <typename LossFn>
bool check_coords(const std::string& op, std::span<double> params,
                  std::span<const double> analytic, LossFn&& loss, bool corrupt,
                  GradCheckReport& report) {
  for (size_t i = 0; i < params.size(); ++i) {
    double saved = params[i];
    params[i] = saved + kStep;
    double up = loss();
    params[i] = saved - kStep;
    double down = loss();
    params[i] = saved;
    double fd = (up - down) / (2.0 * kStep);
    double a = analytic[i] + (corrupt && i == 0 ? 1e-2 : 0.0);
    ++report.coords_checked;
    double err = rel_err(a, fd);
    if (err > kRelTol) {
      report.failure = GradCheckFailure{op, i, a, fd, err};
      return false;
    }
  }
  return true;
}

RewardModel make_model(const GenerationMdp& mdp, int variant, Rng& rng) {
  RewardModel m = variant == 0 ? RewardModel::tabular(mdp)
                  : variant == 1
                      ? RewardModel::linear(mdp, FeatureKind::PositionalOnehot)
                      : RewardModel::linear(mdp, FeatureKind::ContextCrossed);
  for (double& p : m.mutable_params()) p = 0.5 * rng.normal();
  return m;
}

bool check_mse(uint64_t seed, bool corrupt, GradCheckReport& report) {
  Rng rng(seed);
  int variant = 0;
  for (const Shape& sh : kShapes) {
    GenerationMdp mdp = GenerationMdp::uniform_contexts(sh.vocab, sh.horizon, sh.contexts);
    RewardModel model = make_model(mdp, variant++ % 3, rng);
    std::vector<RatingDatum> ratings;
    for (ContextId c = 0; c < mdp.num_contexts(); ++c)
      for (int k = 0; k < 3; ++k)
        ratings.push_back({c, rng.uniform_below(mdp.num_outputs()), rng.normal()});
    double l2 = 0.01;
    LossGrad lg = mse_loss_and_grad(model, ratings, l2);
    auto loss = [&] { return mse_loss_and_grad(model, ratings, l2).loss; };
    if (!check_coords("mse", model.mutable_params(), lg.grad, loss, corrupt, report))
      return false;
  }
  return true;
}

bool check_bt_nll(uint64_t seed, bool corrupt, GradCheckReport& report) {
  Rng rng(seed + 1);
  int variant = 1;
  for (const Shape& sh : kShapes) {
    GenerationMdp mdp = GenerationMdp::uniform_contexts(sh.vocab, sh.horizon, sh.contexts);
    RewardModel model = make_model(mdp, variant++ % 3, rng);
    std::vector<PreferenceDatum> prefs;
    for (ContextId c = 0; c < mdp.num_contexts(); ++c)
      for (int k = 0; k < 4; ++k) {
        OutputIndex a = rng.uniform_below(mdp.num_outputs());
        OutputIndex b = rng.uniform_below(mdp.num_outputs());
        if (a == b) b = (b + 1) % mdp.num_outputs();
        prefs.push_back({c, a, b});
      }
    double l2 = 1e-3;
    LossGrad lg = bt_nll_and_grad(model, prefs, l2);
    auto loss = [&] { return bt_nll_and_grad(model, prefs, l2).loss; };
    if (!check_coords("bt_nll", model.mutable_params(), lg.grad, loss, corrupt, report))
      return false;
  }
  return true;
}

bool check_sft(uint64_t seed, bool corrupt, GradCheckReport& report) {
  Rng rng(seed + 2);
  for (const Shape& sh : kShapes) {
    GenerationMdp mdp = GenerationMdp::uniform_contexts(sh.vocab, sh.horizon, sh.contexts);
    Policy policy = Policy::random_logits(mdp, rng.uniform_below(1u << 30), 0.7);
    std::vector<Trajectory> demos;
    for (int k = 0; k < 6; ++k) {
      Trajectory d;
      d.context = static_cast<ContextId>(rng.uniform_below(mdp.num_contexts()));
      d.output = mdp.output_at(rng.uniform_below(mdp.num_outputs()));
      demos.push_back(std::move(d));
    }
    std::vector<double> grad = sft_gradient(mdp, policy, demos);
    auto objective = [&] {
      double s = 0.0;
      for (const Trajectory& d : demos) s += policy.log_prob_output(mdp, d.context, d.output);
      return s / static_cast<double>(demos.size());
    };
    if (!check_coords("sft", policy.mutable_logits(), grad, objective, corrupt, report))
      return false;
  }
  return true;
}

// Expected policy gradient in advantage-visitation form,
// dJ/dz[s,a] = d(s) pi(a|s) (Q(s,a) - V(s)), assembled from layer-by-layer
// visitation probabilities; checked against differences of the exact J.
std::vector<double> expected_pg(const GenerationMdp& mdp, const Policy& policy,
                                const RewardFn& reward) {
  ValueFunction vf = exact_value(mdp, policy, reward);
  ShapedReward shaped{&reward, nullptr, nullptr, 0.0};
  std::vector<double> grad(mdp.num_nonterminal_states() * mdp.vocab_size(), 0.0);
  uint32_t V = mdp.vocab_size();
  std::vector<double> probs(V);
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    std::vector<double> visit{mdp.context_dist()[c]};
    for (uint32_t t = 0; t < mdp.horizon(); ++t) {
      std::vector<double> next(visit.size() * V, 0.0);
      for (uint64_t p = 0; p < visit.size(); ++p) {
        StateIndex s = c * mdp.states_per_context() + mdp.layer_offset(t) + p;
        policy.fill_probs(s, probs);
        double v = vf.at(s);
        for (TokenId a = 0; a < V; ++a) {
          double q = q_value(mdp, vf, shaped, c, t, p, a);
          grad[s * V + a] = visit[p] * probs[a] * (q - v);
          next[p * V + a] = visit[p] * probs[a];
        }
      }
      visit = std::move(next);
    }
  }
  return grad;
}

bool check_pg(uint64_t seed, bool corrupt, GradCheckReport& report) {
  Rng rng(seed + 3);
  for (const Shape& sh : kShapes) {
    GenerationMdp mdp = GenerationMdp::uniform_contexts(sh.vocab, sh.horizon, sh.contexts);
    OracularReward oracle = make_oracle(
        mdp, GaussianRandomSpec{0.0, 1.0, rng.uniform_below(1u << 30)});
    Policy policy = Policy::random_logits(mdp, rng.uniform_below(1u << 30), 0.6);
    std::vector<double> grad = expected_pg(mdp, policy, oracle);
    auto objective = [&] { return exact_performance(mdp, policy, oracle); };
    if (!check_coords("pg", policy.mutable_logits(), grad, objective, corrupt, report))
      return false;
  }
  return true;
}

}  // namespace

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops = {"mse", "bt_nll", "sft", "pg"};
  return ops;
}

GradCheckReport run_gradcheck(uint64_t seed, const std::string& corrupt_op) {
  if (!corrupt_op.empty()) {
    bool known = false;
    for (const std::string& op : gradcheck_ops()) known = known || op == corrupt_op;
    if (!known) throw ContractViolation("unknown gradcheck op '" + corrupt_op + "'");
  }
  GradCheckReport report;
  report.seed = seed;
  if (!check_mse(seed, corrupt_op == "mse", report)) return report;
  if (!check_bt_nll(seed, corrupt_op == "bt_nll", report)) return report;
  if (!check_sft(seed, corrupt_op == "sft", report)) return report;
  check_pg(seed, corrupt_op == "pg", report);
  return report;
}

}  // namespace rlhflab
