#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "rlhflab/errors.hpp"
#include "rlhflab/oracle.hpp"
#include "rlhflab/policy_opt.hpp"

using namespace rlhflab;

namespace {

// Independent J: explicit output probabilities chained token by token.
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

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("uniform policy on a 0/1 reward scores one half") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 1, 1);
  OracularReward oracle(1, 2, {1.0, 0.0});
  Policy policy = Policy::uniform(mdp);
  CHECK(exact_performance(mdp, policy, oracle) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("exact performance matches brute-force enumeration") {
  GenerationMdp mdp(3, 3, 4, {0.4, 0.3, 0.2, 0.1});
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 21});
  Policy policy = Policy::random_logits(mdp, 31, 1.2);
  double fast = exact_performance(mdp, policy, oracle);
  double brute = brute_force_performance(mdp, policy, oracle);
  CHECK(fast == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("performance is linear in the reward") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 3, 3);
  OracularReward r1 = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 1});
  OracularReward r2 = make_oracle(mdp, GaussianRandomSpec{0.5, 2.0, 2});
  std::vector<double> mixed(mdp.num_contexts() * mdp.num_outputs());
  for (ContextId c = 0; c < mdp.num_contexts(); ++c)
    for (OutputIndex o = 0; o < mdp.num_outputs(); ++o)
      mixed[c * mdp.num_outputs() + o] = 2.0 * r1.at(c, o) - 3.0 * r2.at(c, o);
  OracularReward rm(mdp.num_contexts(), mdp.num_outputs(), mixed);
  Policy policy = Policy::random_logits(mdp, 3, 0.8);
  double lhs = exact_performance(mdp, policy, rm);
  double rhs = 2.0 * exact_performance(mdp, policy, r1) - 3.0 * exact_performance(mdp, policy, r2);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("a constant reward shift moves J by exactly that constant") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 5});
  std::vector<double> shifted(mdp.num_contexts() * mdp.num_outputs());
  for (ContextId c = 0; c < mdp.num_contexts(); ++c)
    for (OutputIndex o = 0; o < mdp.num_outputs(); ++o)
      shifted[c * mdp.num_outputs() + o] = oracle.at(c, o) + 7.25;
  OracularReward model(mdp.num_contexts(), mdp.num_outputs(), shifted);
  Policy policy = Policy::random_logits(mdp, 6, 1.0);
  double j = exact_performance(mdp, policy, oracle);
  double j_hat = estimated_performance(mdp, policy, model);
  CHECK(j_hat == doctest::Approx(j + 7.25).epsilon(1e-12));
}

TEST_CASE("terminal reward equals the stepwise shaped sum along any rollout") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(3, 3, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 11});
  Policy policy = Policy::random_logits(mdp, 12, 1.0);
  ShapedReward shaped{&oracle, nullptr, nullptr, 0.0};
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    Trajectory traj = rollout(mdp, policy, rng, oracle);
    double stepwise = 0.0;
    uint64_t prefix_value = 0;
    for (uint32_t t = 0; t < mdp.horizon(); ++t) {
      TokenId a = traj.output[t];
      stepwise += shaped.step(mdp, traj.context, t, prefix_value, a);
      prefix_value = prefix_value * mdp.vocab_size() + a;
    }
    // T-1 zero increments plus the terminal lookup: bitwise equal.
    CHECK(stepwise == oracle.at(traj.context, mdp.output_index(traj.output)));
    CHECK(stepwise == traj.terminal_reward);
  }
}

TEST_CASE("monte carlo estimate brackets the exact value") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 17});
  Policy policy = Policy::random_logits(mdp, 18, 0.7);
  double exact = exact_performance(mdp, policy, oracle);
  McEstimate mc = mc_performance(mdp, policy, oracle, 20000, 19);
  CHECK(mc.std_error > 0.0);
  CHECK(std::abs(mc.mean - exact) <= 4.0 * mc.std_error);
  CHECK_THROWS_AS(mc_performance(mdp, policy, oracle, 1, 0), ContractViolation);
}

TEST_CASE("gaussian oracle is seed-deterministic") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  OracularReward a = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 99});
  OracularReward b = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 99});
  OracularReward c = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 100});
  bool all_equal = true, any_diff = false;
  for (ContextId ctx = 0; ctx < 2; ++ctx)
    for (OutputIndex o = 0; o < 4; ++o) {
      all_equal = all_equal && a.at(ctx, o) == b.at(ctx, o);
      any_diff = any_diff || a.at(ctx, o) != c.at(ctx, o);
    }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("target-token oracle counts occurrences and ignores context") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 3, 2);
  OracularReward oracle = make_oracle(mdp, TargetTokenSpec{1, 0.5});
  // Output 0b101 = index 5 contains token 1 twice.
  CHECK(oracle.at(0, 5) == 1.0);
  CHECK(oracle.at(0, 0) == 0.0);
  CHECK(oracle.at(0, 7) == 1.5);
  for (OutputIndex o = 0; o < mdp.num_outputs(); ++o) CHECK(oracle.at(0, o) == oracle.at(1, o));
}

TEST_CASE("prefix-match oracle pays per agreeing position") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  PrefixMatchSpec spec;
  spec.targets = {{0, 1}, {1, 1}};
  spec.match_value = 2.0;
  OracularReward oracle = make_oracle(mdp, spec);
  CHECK(oracle.at(0, 1) == 4.0);  // 01 vs 01
  CHECK(oracle.at(0, 0) == 2.0);  // 00 vs 01
  CHECK(oracle.at(0, 3) == 2.0);  // 11 vs 01
  CHECK(oracle.at(0, 2) == 0.0);  // 10 vs 01
  CHECK(oracle.at(1, 3) == 4.0);  // 11 vs 11
}

TEST_CASE("oracle table survives a csv round trip bit for bit") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(3, 2, 3);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.3, 1.7, 23});
  auto path = temp_path("oracle_roundtrip.csv");
  oracle.save_csv(path);
  OracularReward back = OracularReward::load_csv(path);
  REQUIRE(back.num_contexts() == oracle.num_contexts());
  REQUIRE(back.num_outputs() == oracle.num_outputs());
  for (ContextId c = 0; c < oracle.num_contexts(); ++c)
    for (OutputIndex o = 0; o < oracle.num_outputs(); ++o)
      CHECK(back.at(c, o) == oracle.at(c, o));
  std::filesystem::remove(path);
}

TEST_CASE("fill_row matches at() cell by cell") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 29});
  std::vector<double> row(mdp.num_outputs());
  oracle.fill_row(1, row);
  for (OutputIndex o = 0; o < mdp.num_outputs(); ++o) CHECK(row[o] == oracle.at(1, o));
}
