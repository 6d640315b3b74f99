#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include "rlhflab/oracle.hpp"

namespace rlhflab {

struct RatingDatum {
  ContextId context = 0;
  OutputIndex output = 0;
  double rating = 0.0;
};

struct PreferenceDatum {
  ContextId context = 0;
  OutputIndex winner = 0;
  OutputIndex loser = 0;
};

struct CoverageStats {
  double kappa = 0.0;  // |C_HF| / |C|
  double rho = 0.0;    // covered (c,o) pairs / (|C_HF| * |V|^T)
  uint64_t covered_contexts = 0;
  uint64_t covered_pairs = 0;
};

// Synthesized annotations plus the coverage bookkeeping derived from them:
// which contexts were ever annotated, and which outputs per context.
class FeedbackDataset {
 public:
  void add_rating(const RatingDatum& r);
  void add_preference(const PreferenceDatum& p);

  const std::vector<RatingDatum>& ratings() const { return ratings_; }
  const std::vector<PreferenceDatum>& preferences() const { return preferences_; }
  const std::set<ContextId>& covered_contexts() const { return covered_contexts_; }
  const std::map<ContextId, std::set<OutputIndex>>& covered_outputs() const {
    return covered_outputs_;
  }
  uint64_t covered_pair_count() const;
  bool empty() const { return ratings_.empty() && preferences_.empty(); }

  void save_csv(const std::filesystem::path& path) const;
  static FeedbackDataset load_csv(const std::filesystem::path& path);

 private:
  std::vector<RatingDatum> ratings_;
  std::vector<PreferenceDatum> preferences_;
  std::set<ContextId> covered_contexts_;
  std::map<ContextId, std::set<OutputIndex>> covered_outputs_;
};

enum class PreferenceMode { BtStochastic, Deterministic };

// Exact oracle ratings for `outputs_per_context` distinct outputs of each
// listed context, drawn uniformly or from `sampler`. Throws SizeError when a
// context cannot supply that many distinct outputs (or the rejection budget
// for a peaked sampler runs out).
void collect_ratings(FeedbackDataset& dataset, const GenerationMdp& mdp,
                     const OracularReward& oracle, const std::vector<ContextId>& contexts,
                     uint64_t outputs_per_context, uint64_t seed,
                     const Policy* sampler = nullptr);

// One comparison. BtStochastic: a beats b with probability
// sigmoid(R*(c,a) - R*(c,b)). Deterministic: higher reward wins, equal
// rewards fall back to the lower output index.
PreferenceDatum sample_preference(const OracularReward& oracle, ContextId c, OutputIndex a,
                                  OutputIndex b, PreferenceMode mode, Rng& rng);

// Every unordered pair among `outputs_per_context` distinct uniform outputs,
// compared `samples_per_pair` times each.
void collect_bt_preferences(FeedbackDataset& dataset, const GenerationMdp& mdp,
                            const OracularReward& oracle, const std::vector<ContextId>& contexts,
                            uint64_t outputs_per_context, uint64_t samples_per_pair,
                            uint64_t seed);

// best-to-worst ranking -> the N(N-1)/2 implied pairwise preferences.
std::vector<PreferenceDatum> ranking_to_pairs(ContextId c, const std::vector<OutputIndex>& ranked);

CoverageStats compute_coverage(const GenerationMdp& mdp, const FeedbackDataset& dataset);

// Distinct outputs of a fixed context sampled from the policy (used by
// feedback synthesis and demo collection).
OutputIndex sample_output(const GenerationMdp& mdp, const Policy& policy, ContextId c, Rng& rng);

}  // namespace rlhflab
