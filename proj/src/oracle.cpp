#include "rlhflab/oracle.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "rlhflab/csv.hpp"
#include "rlhflab/kernels.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

OracularReward::OracularReward(uint32_t num_contexts, uint64_t num_outputs,
                               std::vector<double> values)
    : num_contexts_(num_contexts), num_outputs_(num_outputs), values_(std::move(values)) {
  if (num_contexts_ == 0 || num_outputs_ == 0)
    throw ContractViolation("reward table must be non-empty");
  if (values_.size() != static_cast<uint64_t>(num_contexts_) * num_outputs_)
    throw ContractViolation("reward table size must be num_contexts * num_outputs");
}

double OracularReward::at(ContextId c, OutputIndex o) const {
  if (c >= num_contexts_ || o >= num_outputs_)
    throw ContractViolation("reward lookup out of range");
  return values_[c * num_outputs_ + o];
}

std::span<const double> OracularReward::row(ContextId c) const {
  if (c >= num_contexts_) throw ContractViolation("reward lookup out of range");
  return std::span<const double>(values_).subspan(c * num_outputs_, num_outputs_);
}

void OracularReward::fill_row(ContextId c, std::span<double> out) const {
  auto r = row(c);
  if (out.size() != r.size()) throw ContractViolation("fill_row: wrong buffer size");
  std::memcpy(out.data(), r.data(), r.size() * sizeof(double));
}

void OracularReward::save_csv(const std::filesystem::path& path) const {
  csv::Table t;
  t.header = {"context_id", "output_index", "reward"};
  t.rows.reserve(values_.size());
  for (uint32_t c = 0; c < num_contexts_; ++c)
    for (uint64_t o = 0; o < num_outputs_; ++o)
      t.rows.push_back({std::to_string(c), std::to_string(o),
                        csv::format_double(values_[c * num_outputs_ + o])});
  csv::write_table(path, t);
}

OracularReward OracularReward::load_csv(const std::filesystem::path& path) {
  csv::Table t = csv::read_table(path);
  uint32_t max_c = 0;
  uint64_t max_o = 0;
  for (const auto& row : t.rows) {
    if (row.size() != 3) throw ContractViolation("reward csv row must have 3 fields");
    max_c = std::max(max_c, static_cast<uint32_t>(csv::parse_int(row[0])));
    max_o = std::max(max_o, static_cast<uint64_t>(csv::parse_int(row[1])));
  }
  uint32_t nc = max_c + 1;
  uint64_t no = max_o + 1;
  if (t.rows.size() != static_cast<uint64_t>(nc) * no)
    throw ContractViolation("reward csv does not cover a dense table");
  std::vector<double> values(t.rows.size(), 0.0);
  for (const auto& row : t.rows) {
    auto c = static_cast<uint64_t>(csv::parse_int(row[0]));
    auto o = static_cast<uint64_t>(csv::parse_int(row[1]));
    values[c * no + o] = csv::parse_double(row[2]);
  }
  return OracularReward(nc, no, std::move(values));
}

OracularReward make_oracle(const GenerationMdp& mdp, const RewardSpec& spec, uint64_t cap) {
  check_enumeration_cap(mdp, cap);
  uint64_t n = mdp.num_outputs();
  std::vector<double> values(mdp.num_contexts() * n, 0.0);

  if (const auto* g = std::get_if<GaussianRandomSpec>(&spec)) {
    if (!(g->stddev >= 0.0)) throw ContractViolation("gaussian_random stddev must be >= 0");
    Rng rng(g->seed);
    for (double& v : values) v = g->mean + g->stddev * rng.normal();
  } else if (const auto* tt = std::get_if<TargetTokenSpec>(&spec)) {
    mdp.validate_token(tt->token);
    // Count occurrences once per output; the column is context-independent.
    for (uint64_t o = 0; o < n; ++o) {
      auto toks = mdp.output_at(o);
      uint32_t count = 0;
      for (TokenId a : toks) count += (a == tt->token) ? 1 : 0;
      values[o] = tt->bonus * count;
    }
    for (uint32_t c = 1; c < mdp.num_contexts(); ++c)
      std::memcpy(values.data() + c * n, values.data(), n * sizeof(double));
  } else {
    const auto& pm = std::get<PrefixMatchSpec>(spec);
    if (pm.targets.size() != mdp.num_contexts())
      throw ContractViolation("prefix_match needs one target output per context");
    for (uint32_t c = 0; c < mdp.num_contexts(); ++c) {
      const auto& target = pm.targets[c];
      if (target.size() != mdp.horizon())
        throw ContractViolation("prefix_match target length must equal horizon");
      for (TokenId a : target) mdp.validate_token(a);
      for (uint64_t o = 0; o < n; ++o) {
        auto toks = mdp.output_at(o);
        uint32_t matches = 0;
        for (uint32_t t = 0; t < mdp.horizon(); ++t) matches += (toks[t] == target[t]) ? 1 : 0;
        values[c * n + o] = pm.match_value * matches;
      }
    }
  }
  return OracularReward(mdp.num_contexts(), n, std::move(values));
}

double exact_performance(const GenerationMdp& mdp, const Policy& policy, const RewardFn& reward,
                         uint64_t cap) {
  check_enumeration_cap(mdp, cap);
  uint64_t n = mdp.num_outputs();
  std::vector<double> reward_row(n);
  double j = 0.0;
  for (uint32_t c = 0; c < mdp.num_contexts(); ++c) {
    if (mdp.context_dist()[c] == 0.0) continue;
    std::vector<double> dist = policy.output_distribution(mdp, c);
    reward.fill_row(c, reward_row);
    j += mdp.context_dist()[c] * kernels::dot(dist.data(), reward_row.data(), n);
  }
  return j;
}

double estimated_performance(const GenerationMdp& mdp, const Policy& policy,
                             const RewardFn& reward_model, uint64_t cap) {
  return exact_performance(mdp, policy, reward_model, cap);
}

McEstimate mc_performance(const GenerationMdp& mdp, const Policy& policy, const RewardFn& reward,
                          uint64_t num_samples, uint64_t seed) {
  if (num_samples < 2)
    throw ContractViolation("mc_performance needs num_samples >= 2 for a standard error");
  Rng rng(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (uint64_t i = 0; i < num_samples; ++i) {
    Trajectory traj = rollout(mdp, policy, rng, reward);
    sum += traj.terminal_reward;
    sum_sq += traj.terminal_reward * traj.terminal_reward;
  }
  double mean = sum / static_cast<double>(num_samples);
  double var = (sum_sq - sum * mean) / static_cast<double>(num_samples - 1);
  if (var < 0.0) var = 0.0;  // rounding guard for constant rewards
  McEstimate est;
  est.mean = mean;
  est.std_error = std::sqrt(var / static_cast<double>(num_samples));
  return est;
}

}  // namespace rlhflab
