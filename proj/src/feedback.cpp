#include "rlhflab/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rlhflab/csv.hpp"

namespace rlhflab {

void FeedbackDataset::add_rating(const RatingDatum& r) {
  ratings_.push_back(r);
  covered_contexts_.insert(r.context);
  covered_outputs_[r.context].insert(r.output);
}

void FeedbackDataset::add_preference(const PreferenceDatum& p) {
  preferences_.push_back(p);
  covered_contexts_.insert(p.context);
  covered_outputs_[p.context].insert(p.winner);
  covered_outputs_[p.context].insert(p.loser);
}

uint64_t FeedbackDataset::covered_pair_count() const {
  uint64_t n = 0;
  for (const auto& [c, outs] : covered_outputs_) n += outs.size();
  return n;
}

void FeedbackDataset::save_csv(const std::filesystem::path& path) const {
  csv::Table t;
  t.header = {"kind", "context_id", "output_a", "output_b", "rating"};
  for (const auto& r : ratings_)
    t.rows.push_back({"rating", std::to_string(r.context), std::to_string(r.output), "",
                      csv::format_double(r.rating)});
  for (const auto& p : preferences_)
    t.rows.push_back({"preference", std::to_string(p.context), std::to_string(p.winner),
                      std::to_string(p.loser), ""});
  csv::write_table(path, t);
}

FeedbackDataset FeedbackDataset::load_csv(const std::filesystem::path& path) {
  csv::Table t = csv::read_table(path);
  FeedbackDataset d;
  for (const auto& row : t.rows) {
    if (row.size() != 5) throw ContractViolation("feedback csv row must have 5 fields");
    auto c = static_cast<ContextId>(csv::parse_int(row[1]));
    if (row[0] == "rating") {
      d.add_rating({c, static_cast<OutputIndex>(csv::parse_int(row[2])),
                    csv::parse_double(row[4])});
    } else if (row[0] == "preference") {
      d.add_preference({c, static_cast<OutputIndex>(csv::parse_int(row[2])),
                        static_cast<OutputIndex>(csv::parse_int(row[3]))});
    } else {
      throw ContractViolation("feedback csv: unknown kind '" + row[0] + "'");
    }
  }
  return d;
}

OutputIndex sample_output(const GenerationMdp& mdp, const Policy& policy, ContextId c, Rng& rng) {
  mdp.validate_context(c);
  std::vector<double> row(mdp.vocab_size());
  uint64_t prefix_value = 0;
  for (uint32_t t = 0; t < mdp.horizon(); ++t) {
    StateIndex s = c * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
    policy.fill_probs(s, row);
    prefix_value = prefix_value * mdp.vocab_size() + rng.categorical(row);
  }
  return prefix_value;
}

namespace {

// k distinct outputs of context c, ascending. Uniform draws use rejection on
// the index range; policy draws reject duplicates under an attempt budget.
std::vector<OutputIndex> distinct_outputs(const GenerationMdp& mdp, ContextId c, uint64_t k,
                                          Rng& rng, const Policy* sampler) {
  uint64_t n = mdp.num_outputs();
  if (k > n)
    throw SizeError("requested " + std::to_string(k) + " distinct outputs but context has only " +
                    std::to_string(n));
  if (k == n && sampler == nullptr) {
    std::vector<OutputIndex> all(n);
    for (uint64_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  std::set<OutputIndex> chosen;
  uint64_t attempts = 0;
  uint64_t budget = 200 * k + 1000;
  while (chosen.size() < k) {
    if (++attempts > budget)
      throw SizeError("distinct-output sampling exceeded attempt budget " +
                      std::to_string(budget));
    OutputIndex o = sampler ? sample_output(mdp, *sampler, c, rng) : rng.uniform_below(n);
    chosen.insert(o);
  }
  return std::vector<OutputIndex>(chosen.begin(), chosen.end());
}

}  // namespace

void collect_ratings(FeedbackDataset& dataset, const GenerationMdp& mdp,
                     const OracularReward& oracle, const std::vector<ContextId>& contexts,
                     uint64_t outputs_per_context, uint64_t seed, const Policy* sampler) {
  if (outputs_per_context == 0)
    throw ContractViolation("collect_ratings: outputs_per_context must be >= 1");
  Rng rng(seed);
  for (ContextId c : contexts) {
    mdp.validate_context(c);
    for (OutputIndex o : distinct_outputs(mdp, c, outputs_per_context, rng, sampler))
      dataset.add_rating({c, o, oracle.at(c, o)});
  }
}

PreferenceDatum sample_preference(const OracularReward& oracle, ContextId c, OutputIndex a,
                                  OutputIndex b, PreferenceMode mode, Rng& rng) {
  if (a == b) throw ContractViolation("sample_preference: outputs must be distinct");
  double ra = oracle.at(c, a);
  double rb = oracle.at(c, b);
  bool a_wins;
  if (mode == PreferenceMode::BtStochastic) {
    double p = 1.0 / (1.0 + std::exp(-(ra - rb)));
    a_wins = rng.uniform01() < p;
  } else {
    a_wins = ra != rb ? ra > rb : a < b;
  }
  return a_wins ? PreferenceDatum{c, a, b} : PreferenceDatum{c, b, a};
}

void collect_bt_preferences(FeedbackDataset& dataset, const GenerationMdp& mdp,
                            const OracularReward& oracle, const std::vector<ContextId>& contexts,
                            uint64_t outputs_per_context, uint64_t samples_per_pair,
                            uint64_t seed) {
  if (outputs_per_context < 2)
    throw ContractViolation("collect_bt_preferences: needs at least 2 outputs per context");
  if (samples_per_pair == 0)
    throw ContractViolation("collect_bt_preferences: samples_per_pair must be >= 1");
  Rng rng(seed);
  for (ContextId c : contexts) {
    mdp.validate_context(c);
    auto outs = distinct_outputs(mdp, c, outputs_per_context, rng, nullptr);
    for (size_t i = 0; i < outs.size(); ++i)
      for (size_t j = i + 1; j < outs.size(); ++j)
        for (uint64_t s = 0; s < samples_per_pair; ++s)
          dataset.add_preference(
              sample_preference(oracle, c, outs[i], outs[j], PreferenceMode::BtStochastic, rng));
  }
}

std::vector<PreferenceDatum> ranking_to_pairs(ContextId c,
                                              const std::vector<OutputIndex>& ranked) {
  if (ranked.size() < 2) throw ContractViolation("ranking_to_pairs: ranking needs >= 2 outputs");
  std::set<OutputIndex> seen(ranked.begin(), ranked.end());
  if (seen.size() != ranked.size())
    throw ContractViolation("ranking_to_pairs: ranking contains duplicates");
  std::vector<PreferenceDatum> pairs;
  pairs.reserve(ranked.size() * (ranked.size() - 1) / 2);
  for (size_t i = 0; i < ranked.size(); ++i)
    for (size_t j = i + 1; j < ranked.size(); ++j)
      pairs.push_back({c, ranked[i], ranked[j]});
  return pairs;
}

CoverageStats compute_coverage(const GenerationMdp& mdp, const FeedbackDataset& dataset) {
  CoverageStats s;
  s.covered_contexts = dataset.covered_contexts().size();
  s.covered_pairs = dataset.covered_pair_count();
  s.kappa = static_cast<double>(s.covered_contexts) / mdp.num_contexts();
  // O' = every output of every covered context, so an empty dataset has
  // rho = 0 by convention rather than 0/0.
  if (s.covered_contexts > 0) {
    double denom =
        static_cast<double>(s.covered_contexts) * static_cast<double>(mdp.num_outputs());
    s.rho = static_cast<double>(s.covered_pairs) / denom;
  }
  return s;
}

}  // namespace rlhflab
