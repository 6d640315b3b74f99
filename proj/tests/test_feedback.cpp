#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <tuple>

#include "rlhflab/errors.hpp"
#include "rlhflab/feedback.hpp"

using namespace rlhflab;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("ratings reproduce the oracle exactly") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 3);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 61});
  FeedbackDataset data;
  collect_ratings(data, mdp, oracle, {0, 2}, mdp.num_outputs(), 62);
  CHECK(data.ratings().size() == 8);
  for (const RatingDatum& r : data.ratings()) CHECK(r.rating == oracle.at(r.context, r.output));
  CHECK(data.covered_contexts() == std::set<ContextId>{0, 2});
}

TEST_CASE("partial rating draws are distinct per context") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 3, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 63});
  FeedbackDataset data;
  collect_ratings(data, mdp, oracle, {0, 1}, 5, 64);
  CHECK(data.ratings().size() == 10);
  std::set<std::pair<ContextId, OutputIndex>> seen;
  for (const RatingDatum& r : data.ratings()) CHECK(seen.insert({r.context, r.output}).second);
  // More distinct outputs than exist cannot be supplied.
  FeedbackDataset overfull;
  CHECK_THROWS_AS(collect_ratings(overfull, mdp, oracle, {0}, 9, 65), SizeError);
}

TEST_CASE("bradley-terry preference frequencies track the reward gap") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 1, 1);
  const int n = 20000;
  for (double gap : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    OracularReward oracle(1, 2, {gap, 0.0});
    Rng rng(101 + static_cast<uint64_t>(gap * 10 + 100));
    int wins = 0;
    for (int i = 0; i < n; ++i) {
      PreferenceDatum d = sample_preference(oracle, 0, 0, 1, PreferenceMode::BtStochastic, rng);
      if (d.winner == 0) ++wins;
    }
    double p = sigmoid(gap);
    double sigma = std::sqrt(p * (1 - p) * n);
    CHECK(std::abs(wins - p * n) <= 3.0 * sigma);
  }
}

TEST_CASE("deterministic preferences pick the higher reward, ties the lower index") {
  OracularReward oracle(1, 3, {0.5, 2.0, 2.0});
  Rng rng(7);
  PreferenceDatum d = sample_preference(oracle, 0, 0, 1, PreferenceMode::Deterministic, rng);
  CHECK(d.winner == 1);
  CHECK(d.loser == 0);
  d = sample_preference(oracle, 0, 2, 1, PreferenceMode::Deterministic, rng);
  CHECK(d.winner == 1);  // equal rewards: lower output index wins
  CHECK_THROWS_AS(sample_preference(oracle, 0, 1, 1, PreferenceMode::BtStochastic, rng),
                  ContractViolation);
}

TEST_CASE("bt collection produces every pair the requested number of times") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 71});
  FeedbackDataset data;
  collect_bt_preferences(data, mdp, oracle, {0, 1}, 3, 5, 72);
  // 2 contexts x C(3,2) pairs x 5 samples
  CHECK(data.preferences().size() == 30);
  std::map<std::tuple<ContextId, OutputIndex, OutputIndex>, int> counts;
  for (const PreferenceDatum& d : data.preferences()) {
    auto lo = std::min(d.winner, d.loser);
    auto hi = std::max(d.winner, d.loser);
    ++counts[{d.context, lo, hi}];
  }
  CHECK(counts.size() == 6);
  for (const auto& [key, count] : counts) CHECK(count == 5);
}

TEST_CASE("a ranking expands into all implied pairs") {
  std::vector<OutputIndex> ranked = {3, 0, 2};
  auto pairs = ranking_to_pairs(1, ranked);
  REQUIRE(pairs.size() == 3);
  CHECK((pairs[0].winner == 3 && pairs[0].loser == 0));
  CHECK((pairs[1].winner == 3 && pairs[1].loser == 2));
  CHECK((pairs[2].winner == 0 && pairs[2].loser == 2));
  for (const auto& p : pairs) CHECK(p.context == 1);
  CHECK_THROWS_AS(ranking_to_pairs(0, {1}), ContractViolation);
  CHECK_THROWS_AS(ranking_to_pairs(0, {1, 1}), ContractViolation);
}

TEST_CASE("coverage statistics count contexts and pairs") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 4);  // 4 outputs per context
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 73});
  FeedbackDataset data;
  collect_ratings(data, mdp, oracle, {2}, 2, 74);
  CoverageStats cov = compute_coverage(mdp, data);
  CHECK(cov.kappa == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(cov.rho == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cov.covered_contexts == 1);
  CHECK(cov.covered_pairs == 2);

  FeedbackDataset empty;
  CoverageStats none = compute_coverage(mdp, empty);
  CHECK(none.kappa == 0.0);
  CHECK(none.rho == 0.0);
}

TEST_CASE("feedback csv round trip is lossless") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 75});
  FeedbackDataset data;
  collect_ratings(data, mdp, oracle, {0}, 3, 76);
  collect_bt_preferences(data, mdp, oracle, {1}, 2, 4, 77);
  auto path = std::filesystem::temp_directory_path() / "feedback_roundtrip.csv";
  data.save_csv(path);
  FeedbackDataset back = FeedbackDataset::load_csv(path);
  REQUIRE(back.ratings().size() == data.ratings().size());
  REQUIRE(back.preferences().size() == data.preferences().size());
  for (size_t i = 0; i < data.ratings().size(); ++i) {
    CHECK(back.ratings()[i].context == data.ratings()[i].context);
    CHECK(back.ratings()[i].output == data.ratings()[i].output);
    CHECK(back.ratings()[i].rating == data.ratings()[i].rating);
  }
  for (size_t i = 0; i < data.preferences().size(); ++i) {
    CHECK(back.preferences()[i].context == data.preferences()[i].context);
    CHECK(back.preferences()[i].winner == data.preferences()[i].winner);
    CHECK(back.preferences()[i].loser == data.preferences()[i].loser);
  }
  CHECK(back.covered_contexts() == data.covered_contexts());
  std::filesystem::remove(path);
}

TEST_CASE("preference sampling is seed-deterministic") {
  GenerationMdp mdp = GenerationMdp::uniform_contexts(2, 2, 2);
  OracularReward oracle = make_oracle(mdp, GaussianRandomSpec{0.0, 1.0, 79});
  FeedbackDataset a, b;
  collect_bt_preferences(a, mdp, oracle, {0, 1}, 3, 7, 80);
  collect_bt_preferences(b, mdp, oracle, {0, 1}, 3, 7, 80);
  REQUIRE(a.preferences().size() == b.preferences().size());
  for (size_t i = 0; i < a.preferences().size(); ++i)
    CHECK(a.preferences()[i].winner == b.preferences()[i].winner);
}
