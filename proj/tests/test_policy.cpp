#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "rlhflab/errors.hpp"
#include "rlhflab/kernels.hpp"
#include "rlhflab/policy.hpp"

using namespace rlhflab;

TEST_CASE("every state's action probabilities sum to one") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(3, 3, 2);
  Policy policy = Policy::random_logits(mdp, 41, 2.0);
  std::vector<double> probs(mdp.vocab_size());
  for (StateIndex s = 0; s < mdp.num_nonterminal_states(); ++s) {
    policy.fill_probs(s, probs);
    double total = 0.0;
    for (double p : probs) {
      CHECK(p >= 0.0);
      total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax matches a direct computation") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(3, 1, 1);
  Policy policy(mdp);
  auto logits = policy.mutable_logits();
  logits[0] = 1.0;
  logits[1] = 2.0;
  logits[2] = 3.0;
  std::vector<double> probs(3);
  policy.fill_probs(0, probs);
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int a = 0; a < 3; ++a)
    CHECK(probs[a] == doctest::Approx(std::exp(1.0 + a) / z).epsilon(1e-14));
  CHECK(policy.log_prob(0, 2) == doctest::Approx(3.0 - std::log(z)).epsilon(1e-14));
}

TEST_CASE("extreme logits stay finite through max subtraction") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 1, 1);
  Policy policy(mdp);
  auto logits = policy.mutable_logits();
  logits[0] = 5000.0;
  logits[1] = -5000.0;
  std::vector<double> probs(2);
  policy.fill_probs(0, probs);
  CHECK(probs[0] == 1.0);
  CHECK(probs[1] == 0.0);
  CHECK(std::isfinite(policy.log_prob(0, 0)));
}

TEST_CASE("uniform policy spreads output mass evenly") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 3, 2);
  Policy policy = Policy::uniform(mdp);
  auto dist = policy.output_distribution(mdp, 1);
  REQUIRE(dist.size() == 8);
  for (double p : dist) CHECK(p == doctest::Approx(0.125).epsilon(1e-14));
}

TEST_CASE("output distribution equals chained per-token products and sums to one") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(3, 3, 2);
  Policy policy = Policy::random_logits(mdp, 43, 1.5);
  std::vector<double> probs(mdp.vocab_size());
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    auto dist = policy.output_distribution(mdp, c);
    double total = kernels::sum(dist.data(), dist.size());
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (OutputIndex o = 0; o < mdp.num_outputs(); ++o) {
      auto tokens = mdp.output_at(o);
      double p = 1.0;
      std::vector<TokenId> prefix;
      for (TokenId a : tokens) {
        policy.fill_probs(mdp.state_index(c, prefix), probs);
        p *= probs[a];
        prefix.push_back(a);
      }
      CHECK(dist[o] == doctest::Approx(p).epsilon(1e-12));
    }
  }
}

TEST_CASE("log output distribution agrees with the probability sweep") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 4, 2);
  Policy policy = Policy::random_logits(mdp, 47, 2.5);
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    auto dist = policy.output_distribution(mdp, c);
    auto log_dist = policy.log_output_distribution(mdp, c);
    REQUIRE(log_dist.size() == dist.size());
    for (size_t o = 0; o < dist.size(); ++o)
      CHECK(std::exp(log_dist[o]) == doctest::Approx(dist[o]).epsilon(1e-12));
    CHECK(policy.log_prob_output(mdp, c, mdp.output_at(3)) ==
          doctest::Approx(log_dist[3]).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip preserves logits bit for bit") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(3, 2, 2);
  Policy policy = Policy::random_logits(mdp, 53, 1.0, PolicyRole::Rlhf);
  auto path = std::filesystem::temp_directory_path() / "policy_roundtrip.csv";
  policy.save_csv(path);
  Policy back = Policy::load_csv(mdp, path);
  REQUIRE(back.logits().size() == policy.logits().size());
  for (size_t i = 0; i < policy.logits().size(); ++i)
    CHECK(back.logits()[i] == policy.logits()[i]);
  std::filesystem::remove(path);
}

TEST_CASE("loading a checkpoint with the wrong shape fails") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(3, 2, 2);
  Policy policy = Policy::random_logits(mdp, 53, 1.0);
  auto path = std::filesystem::temp_directory_path() / "policy_badshape.csv";
  policy.save_csv(path);
  GenerationMdp other = GenerationMdp::uniform_contexts(3, 2, 3);
  CHECK_THROWS_AS(Policy::load_csv(other, path), ContractViolation);
  std::filesystem::remove(path);
}

TEST_CASE("total variation distance behaves") {
  std::vector<double> p = {1.0, 0.0};
  std::vector<double> q = {0.0, 1.0};
  CHECK(tv_distance(p, q) == 1.0);
  CHECK(tv_distance(p, p) == 0.0);
  std::vector<double> r = {0.75, 0.25};
  CHECK(tv_distance(p, r) == doctest::Approx(0.25).epsilon(1e-15));
}
