// End-to-end acceptance gates. Each numbered check prints one [PASS]/[FAIL]
// line; any failure exits nonzero. argv[1] must point at the rlhf_lab
// executable (used by the determinism check).

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rlhflab/analysis.hpp"
#include "rlhflab/feedback.hpp"
#include "rlhflab/gradcheck.hpp"
#include "rlhflab/oracle.hpp"
#include "rlhflab/policy_opt.hpp"
#include "rlhflab/rng.hpp"

using namespace rlhflab;
namespace fs = std::filesystem;

namespace {

int g_checked = 0;

#define REQUIRE(cond, msg)                                                                 \
  do {                                                                                     \
    if (!(cond)) {                                                                         \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << msg << "\n";         \
      std::exit(1);                                                                        \
    }                                                                                      \
  } while (0)

void pass(int criterion, const std::string& what) {
  ++g_checked;
  std::cout << "[PASS] criterion " << criterion << ": " << what << "\n";
}

double brute_force_performance(const GenerationMdp& mdp, const Policy& policy,
                               const RewardFn& reward) {
  double j = 0.0;
  std::vector<double> probs(mdp.vocab_size());
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    double jc = 0.0;
    for (OutputIndex o = 0; o < mdp.num_outputs(); ++o) {
      auto tokens = mdp.output_at(o);
      double p = 1.0;
      std::vector<TokenId> prefix;
      for (TokenId a : tokens) {
        policy.fill_probs(mdp.state_index(c, prefix), probs);
        p *= probs[a];
        prefix.push_back(a);
      }
      jc += p * reward.at(c, o);
    }
    j += mdp.context_dist()[c] * jc;
  }
  return j;
}

// 1. PPO with the KL penalty lands on the closed-form optimum.
void criterion_ppo_fixed_point() {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(4, 3, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 2024});
  Policy pre = Policy::uniform(mdp);
  Policy star = closed_form_policy(mdp, pre, oracle, 1.0);
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    OptimConfig cfg;
    cfg.algorithm = Algorithm::Ppo;
    cfg.step_size = 0.2;
    cfg.batch_size = 64;
    cfg.num_iters = 5000;
    cfg.beta = 1.0;
    cfg.baseline = BaselineKind::ExactValue;
    cfg.seed = seed;
    Policy trained = train_policy(mdp, oracle, pre, cfg);
    for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
      double tv = tv_distance(trained.output_distribution(mdp, c),
                              star.output_distribution(mdp, c));
      REQUIRE(tv <= 0.05, "ppo seed " << seed << " context " << c << " tv " << tv << " > 0.05");
      worst = std::max(worst, tv);
    }
  }
  std::ostringstream os;
  os << "ppo reaches the closed form, worst tv " << worst << " <= 0.05 over 5 seeds";
  pass(1, os.str());
}

// 2. Exhaustive BT preferences identify the reward up to the gauge.
void criterion_bt_recovery() {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 42});
  FeedbackDataset data;
  collect_bt_preferences(data, mdp, oracle, {0, 1}, mdp.num_outputs(), 200, 6);
  RewardModel model = RewardModel::tabular(mdp);
  TrainConfig cfg;
  cfg.objective = Objective::BtNll;  // l2 defaults to 1e-4
  cfg.step_size = 0.004;
  cfg.num_epochs = 60000;
  cfg.convergence_tol = 1e-9;
  TrainResult tr = train(model, data, cfg);
  REQUIRE(tr.converged, "bt training did not converge");
  double err = centered_recovery_error(mdp, model, oracle);
  REQUIRE(err <= 0.05, "centered recovery error " << err << " > 0.05");
  std::ostringstream os;
  os << "bt fit recovers centered rewards, max error " << err << " <= 0.05";
  pass(2, os.str());
}

// 3. A perfect reward model leaves no gap.
void criterion_perfect_reward_null() {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 3);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 33});
  Policy pre = Policy::random_logits(mdp, 34, 0.5);
  std::set<ContextId> all = {0, 1, 2};

  GapReport ident = performance_gap(mdp, oracle, oracle, pre, 1.0, all);
  REQUIRE(ident.delta_j <= 1e-12, "identity model delta_j " << ident.delta_j << " > 1e-12");

  FeedbackDataset data;
  collect_ratings(data, mdp, oracle, {0, 1, 2}, mdp.num_outputs(), 35);
  RewardModel model = RewardModel::tabular(mdp);
  TrainConfig cfg;
  cfg.step_size = 0.25;
  cfg.num_epochs = 20000;
  cfg.convergence_tol = 1e-13;
  train(model, data, cfg);
  GapReport fitted = performance_gap(mdp, oracle, model, pre, 1.0, data.covered_contexts());
  REQUIRE(fitted.delta_j <= 1e-6, "fitted model delta_j " << fitted.delta_j << " > 1e-6");
  std::ostringstream os;
  os << "delta_j " << ident.delta_j << " (identity) and " << fitted.delta_j
     << " (full-coverage fit)";
  pass(3, os.str());
}

// 4. Fuller coverage never loses on average; full coverage wins outright.
void criterion_coverage_trend() {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 8);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 44});
  Policy pre = Policy::uniform(mdp);
  SweepSettings settings;
  settings.train.step_size = 0.25;
  settings.train.num_epochs = 4000;
  std::vector<uint64_t> seeds;
  for (uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
  SweepResult result =
      coverage_sweep(mdp, oracle, pre, {0.25, 0.5, 0.75, 1.0}, seeds, settings);
  REQUIRE(result.aggregates.size() == 4, "expected 4 aggregates");
  const SweepAggregate& full = result.aggregates.back();
  for (size_t i = 0; i + 1 < result.aggregates.size(); ++i) {
    REQUIRE(full.mean_delta_j <= result.aggregates[i].mean_delta_j,
            "mean delta_j at kappa=1 not the grid minimum");
    REQUIRE(full.mean_ood_mse <= result.aggregates[i].mean_ood_mse,
            "mean ood mse at kappa=1 above kappa=" << result.aggregates[i].axis_value);
  }
  std::ostringstream os;
  os << "mean delta_j falls from " << result.aggregates.front().mean_delta_j << " (kappa 0.25) to "
     << full.mean_delta_j << " (kappa 1)";
  pass(4, os.str());
}

// 5. More regularization, less movement and less reward.
void criterion_beta_tradeoff() {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 8);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 55});
  Policy pre = Policy::random_logits(mdp, 56, 0.4);
  std::vector<ContextId> half = {0, 1, 2, 3};
  FeedbackDataset data;
  collect_ratings(data, mdp, oracle, half, mdp.num_outputs(), 57);
  RewardModel model = RewardModel::tabular(mdp);  // imperfect: half the contexts unseen
  TrainConfig cfg;
  cfg.step_size = 0.25;
  cfg.num_epochs = 4000;
  train(model, data, cfg);
  SweepResult result =
      beta_sweep(mdp, oracle, model, pre, {0.1, 1.0, 10.0, 100.0}, data.covered_contexts());
  for (size_t i = 1; i < result.points.size(); ++i) {
    REQUIRE(result.points[i].kl_to_pre <= result.points[i - 1].kl_to_pre + 1e-9,
            "kl increased from beta " << result.points[i - 1].axis_value << " to "
                                      << result.points[i].axis_value);
    REQUIRE(result.points[i].j_star <= result.points[i - 1].j_star + 1e-9,
            "j_star increased from beta " << result.points[i - 1].axis_value << " to "
                                          << result.points[i].axis_value);
  }
  std::ostringstream os;
  os << "kl falls " << result.points.front().kl_to_pre << " -> " << result.points.back().kl_to_pre
     << " across beta 0.1 -> 100";
  pass(5, os.str());
}

// 6. Every analytic gradient survives finite differences.
void criterion_gradient_oracles() {
  uint64_t coords = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {  // 5 seeds x 4 shapes = 20 instances per op
    GradCheckReport report = run_gradcheck(seed);
    REQUIRE(!report.failure, "gradcheck failed op " << report.failure->op << " coord "
                                                    << report.failure->coord << " rel err "
                                                    << report.failure->rel_err);
    coords += report.coords_checked;
  }
  GradCheckReport poisoned = run_gradcheck(0, "mse");
  REQUIRE(poisoned.failure.has_value(), "poisoned gradcheck failed to fail");
  std::ostringstream os;
  os << coords << " coordinates across mse/bt_nll/sft/pg within 1e-4 of central differences";
  pass(6, os.str());
}

// 7. The MC estimator agrees with exact enumeration, which agrees with brute force.
void criterion_estimator_consistency() {
  Rng rng(77);
  for (int inst = 0; inst < 10; ++inst) {
    uint32_t vocab = 2 + static_cast<uint32_t>(rng.uniform_below(2));
    uint32_t horizon = 1 + static_cast<uint32_t>(rng.uniform_below(3));
    uint32_t contexts = 1 + static_cast<uint32_t>(rng.uniform_below(3));
    GenerationMdp mdp = GenerationMdp::uniform_contexts(vocab, horizon, contexts);
    OracularReward oracle =
        make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, rng.uniform_below(1u << 20)});
    Policy policy = Policy::random_logits(mdp, rng.uniform_below(1u << 20), 0.8);
    double exact = exact_performance(mdp, policy, oracle);
    double brute = brute_force_performance(mdp, policy, oracle);
    REQUIRE(std::abs(exact - brute) <= 1e-12,
            "exact vs brute force differ by " << std::abs(exact - brute));
    McEstimate mc = mc_performance(mdp, policy, oracle, 100000, rng.uniform_below(1u << 20));
    REQUIRE(std::abs(mc.mean - exact) <= 4.0 * mc.std_error,
            "mc estimate " << mc.mean << " outside 4 se of " << exact);
  }
  pass(7, "mc within 4 se and exact == brute force to 1e-12 on 10 instances");
}

// 8. Rankings expand into the full set of implied pairs.
void criterion_pair_expansion() {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 4, 1);  // 16 outputs to draw from
  Rng rng(88);
  for (uint64_t n = 2; n <= 12; ++n) {
    // Random distinct outputs in a random order.
    std::vector<OutputIndex> pool(mdp.num_outputs());
    for (OutputIndex o = 0; o < pool.size(); ++o) pool[o] = o;
    for (size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.uniform_below(i)]);
    std::vector<OutputIndex> ranking(pool.begin(), pool.begin() + n);
    auto pairs = ranking_to_pairs(0, ranking);
    REQUIRE(pairs.size() == n * (n - 1) / 2,
            "ranking of " << n << " gave " << pairs.size() << " pairs");
    for (size_t i = 0, k = 0; i < ranking.size(); ++i)
      for (size_t j = i + 1; j < ranking.size(); ++j, ++k) {
        REQUIRE(pairs[k].winner == ranking[i] && pairs[k].loser == ranking[j],
                "pair " << k << " does not respect the ranking order");
      }
  }
  pass(8, "rankings of 2..12 outputs expand to exactly n(n-1)/2 ordered pairs");
}

// 9. Advantages are centered and root values integrate to J.
void criterion_advantage_identities() {
  Rng rng(99);
  for (int inst = 0; inst < 10; ++inst) {
    uint32_t vocab = 2 + static_cast<uint32_t>(rng.uniform_below(2));
    uint32_t horizon = 1 + static_cast<uint32_t>(rng.uniform_below(3));
    uint32_t contexts = 1 + static_cast<uint32_t>(rng.uniform_below(3));
    GenerationMdp mdp = GenerationMdp::uniform_contexts(vocab, horizon, contexts);
    OracularReward oracle =
        make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, rng.uniform_below(1u << 20)});
    Policy policy = Policy::random_logits(mdp, rng.uniform_below(1u << 20), 1.0);
    ValueFunction vf = exact_value(mdp, policy, oracle);
    ShapedReward shaped{&oracle, nullptr, nullptr, 0.0};
    std::vector<double> probs(vocab);
    for (ContextId c = 0; c < contexts; ++c) {
      uint64_t layer = 1;
      for (uint32_t t = 0; t < horizon; ++t) {
        for (uint64_t p = 0; p < layer; ++p) {
          StateIndex s = c * mdp.states_per_context() + mdp.layer_offset(t) + p;
          policy.fill_probs(s, probs);
          double mean_adv = 0.0;
          for (TokenId a = 0; a < vocab; ++a)
            mean_adv += probs[a] * advantage(mdp, vf, shaped, c, t, p, a);
          REQUIRE(std::abs(mean_adv) <= 1e-10,
                  "advantages at state " << s << " sum to " << mean_adv);
        }
        layer *= vocab;
      }
    }
    double j = exact_performance(mdp, policy, oracle);
    double v_root = 0.0;
    for (ContextId c = 0; c < contexts; ++c)
      v_root += mdp.context_dist()[c] * vf.at(c * mdp.states_per_context());
    REQUIRE(std::abs(v_root - j) <= 1e-10,
            "E[V(root)] " << v_root << " vs J " << j << " differ");
  }
  pass(9, "advantages center to zero and E[V(root)] = J on 10 instances");
}

// 10. Per-context reward shifts are invisible to loss, policy, and gap.
void criterion_gauge_invariance() {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 3);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 110});
  Policy pre = Policy::random_logits(mdp, 111, 0.6);
  std::set<ContextId> covered = {0, 1};

  RewardModel model = RewardModel::tabular(mdp);
  Rng rng(112);
  for (double& p : model.mutable_params()) p = rng.normal();
  RewardModel shifted = model;
  const double shifts[3] = {5.0, -11.0, 0.5};
  {
    auto params = shifted.mutable_params();
    for (ContextId c = 0; c < mdp.num_contexts(); ++c)
      for (OutputIndex o = 0; o < mdp.num_outputs(); ++o)
        params[c * mdp.num_outputs() + o] += shifts[c];
  }

  FeedbackDataset data;
  collect_bt_preferences(data, mdp, oracle, {0, 1, 2}, mdp.num_outputs(), 5, 113);
  double loss_a = bt_nll_and_grad(model, data.preferences(), 0.0).loss;
  double loss_b = bt_nll_and_grad(shifted, data.preferences(), 0.0).loss;
  REQUIRE(std::abs(loss_a - loss_b) <= 1e-10,
          "bt loss moved by " << std::abs(loss_a - loss_b) << " under a gauge shift");

  Policy pol_a = closed_form_policy(mdp, pre, model, 1.0);
  Policy pol_b = closed_form_policy(mdp, pre, shifted, 1.0);
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    double tv =
        tv_distance(pol_a.output_distribution(mdp, c), pol_b.output_distribution(mdp, c));
    REQUIRE(tv <= 1e-10, "closed form moved by tv " << tv << " under a gauge shift");
  }

  GapReport gap_a = performance_gap(mdp, oracle, model, pre, 1.0, covered);
  GapReport gap_b = performance_gap(mdp, oracle, shifted, pre, 1.0, covered);
  REQUIRE(std::abs(gap_a.delta_j - gap_b.delta_j) <= 1e-10,
          "delta_j moved by " << std::abs(gap_a.delta_j - gap_b.delta_j));
  pass(10, "per-context shifts leave bt loss, closed form, and delta_j unchanged");
}

// 11. The pipeline is bit-reproducible end to end.
void criterion_determinism(const std::string& binary) {
  fs::path scratch = fs::temp_directory_path() / "rlhf_lab_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  fs::path dir_a = scratch / "a";
  fs::path dir_b = scratch / "b";
  const std::string overrides =
      " --set mdp.num_contexts=3 --set policy.num_iters=60 --set feedback.kappa=0.7";
  for (const fs::path& dir : {dir_a, dir_b}) {
    std::string cmd =
        binary + " run" + overrides + " --out " + dir.string() + " > /dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0, "pipeline run into " << dir << " failed");
  }
  const char* names[] = {"config_resolved.json",      "oracle_reward.csv", "feedback.csv",
                         "reward_model.csv",          "policy.csv",        "gap_report.csv",
                         "training_diagnostics.csv"};
  for (const char* name : names) {
    std::ifstream a(dir_a / name, std::ios::binary), b(dir_b / name, std::ios::binary);
    REQUIRE(a && b, "missing artifact " << name);
    std::ostringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    REQUIRE(sa.str() == sb.str(), "artifact " << name << " differs between identical runs");
    REQUIRE(!sa.str().empty(), "artifact " << name << " is empty");
  }
  fs::remove_all(scratch);
  pass(11, "two identical runs produce byte-identical artifacts");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-rlhf_lab>\n";
    return 2;
  }
  criterion_ppo_fixed_point();
  criterion_bt_recovery();
  criterion_perfect_reward_null();
  criterion_coverage_trend();
  criterion_beta_tradeoff();
  criterion_gradient_oracles();
  criterion_estimator_consistency();
  criterion_pair_expansion();
  criterion_advantage_identities();
  criterion_gauge_invariance();
  criterion_determinism(argv[1]);
  std::cout << "all " << g_checked << " acceptance criteria passed\n";
  return 0;
}
