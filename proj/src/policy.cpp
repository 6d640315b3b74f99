#include "rlhflab/policy.hpp"

#include <cmath>

#include "rlhflab/csv.hpp"
#include "rlhflab/kernels.hpp"

namespace rlhflab {

std::string to_string(PolicyRole role) {
  switch (role) {
    case PolicyRole::Pre: return "pre";
    case PolicyRole::Rlhf: return "rlhf";
    case PolicyRole::Star: return "star";
  }
  return "pre";
}

Policy::Policy(const GenerationMdp& mdp, PolicyRole role)
    : vocab_size_(mdp.vocab_size()),
      horizon_(mdp.horizon()),
      num_contexts_(mdp.num_contexts()),
      role_(role),
      logits_(mdp.num_nonterminal_states() * mdp.vocab_size(), 0.0) {}

Policy Policy::uniform(const GenerationMdp& mdp, PolicyRole role) { return Policy(mdp, role); }

Policy Policy::random_logits(const GenerationMdp& mdp, uint64_t seed, double scale,
                             PolicyRole role) {
  Policy p(mdp, role);
  Rng rng(seed);
  for (double& v : p.logits_) v = scale * rng.normal();
  return p;
}

void Policy::fill_probs(StateIndex s, std::span<double> out) const {
  auto row = logit_row(s);
  double m = kernels::max_value(row.data(), row.size());
  for (size_t i = 0; i < row.size(); ++i) out[i] = std::exp(row[i] - m);
  double z = kernels::sum(out.data(), out.size());
  kernels::scale_inplace(out.data(), 1.0 / z, out.size());
}

std::vector<double> Policy::probs(StateIndex s) const {
  std::vector<double> out(vocab_size_);
  fill_probs(s, out);
  return out;
}

void Policy::fill_log_probs(StateIndex s, std::span<double> out) const {
  auto row = logit_row(s);
  double m = kernels::max_value(row.data(), row.size());
  double z = 0.0;
  for (size_t i = 0; i < row.size(); ++i) z += std::exp(row[i] - m);
  double log_z = m + std::log(z);
  for (size_t i = 0; i < row.size(); ++i) out[i] = row[i] - log_z;
}

double Policy::log_prob(StateIndex s, TokenId a) const {
  auto row = logit_row(s);
  double m = kernels::max_value(row.data(), row.size());
  double z = 0.0;
  for (size_t i = 0; i < row.size(); ++i) z += std::exp(row[i] - m);
  return row[a] - m - std::log(z);
}

std::vector<double> Policy::output_distribution(const GenerationMdp& mdp, ContextId c) const {
  mdp.validate_context(c);
  std::vector<double> dist{1.0};
  std::vector<double> next;
  std::vector<double> row(vocab_size_);
  for (uint32_t t = 0; t < horizon_; ++t) {
    next.assign(dist.size() * vocab_size_, 0.0);
    StateIndex base = c * mdp.states_per_context() + mdp.layer_offset(t);
    for (uint64_t p = 0; p < dist.size(); ++p) {
      fill_probs(base + p, row);
      kernels::scaled_copy(next.data() + p * vocab_size_, row.data(), dist[p], vocab_size_);
    }
    dist.swap(next);
  }
  return dist;
}

std::vector<double> Policy::log_output_distribution(const GenerationMdp& mdp, ContextId c) const {
  mdp.validate_context(c);
  std::vector<double> dist{0.0};
  std::vector<double> next;
  std::vector<double> row(vocab_size_);
  for (uint32_t t = 0; t < horizon_; ++t) {
    next.assign(dist.size() * vocab_size_, 0.0);
    StateIndex base = c * mdp.states_per_context() + mdp.layer_offset(t);
    for (uint64_t p = 0; p < dist.size(); ++p) {
      fill_log_probs(base + p, row);
      for (uint32_t a = 0; a < vocab_size_; ++a) next[p * vocab_size_ + a] = dist[p] + row[a];
    }
    dist.swap(next);
  }
  return dist;
}

double Policy::log_prob_output(const GenerationMdp& mdp, ContextId c,
                               std::span<const TokenId> output) const {
  if (output.size() != horizon_) throw ContractViolation("output length must equal horizon");
  double acc = 0.0;
  uint64_t prefix_value = 0;
  for (uint32_t t = 0; t < horizon_; ++t) {
    StateIndex s = c * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
    acc += log_prob(s, output[t]);
    prefix_value = prefix_value * vocab_size_ + output[t];
  }
  return acc;
}

void Policy::save_csv(const std::filesystem::path& path) const {
  csv::Table t;
  t.header = {"state_index", "token_id", "logit"};
  t.rows.reserve(logits_.size());
  for (uint64_t s = 0; s < num_states(); ++s)
    for (uint32_t a = 0; a < vocab_size_; ++a)
      t.rows.push_back({std::to_string(s), std::to_string(a),
                        csv::format_double(logits_[s * vocab_size_ + a])});
  csv::write_table(path, t);
}

Policy Policy::load_csv(const GenerationMdp& mdp, const std::filesystem::path& path) {
  csv::Table t = csv::read_table(path);
  Policy p(mdp);
  if (t.rows.size() != p.logits_.size())
    throw ContractViolation("policy checkpoint row count does not match the mdp shape");
  for (const auto& row : t.rows) {
    if (row.size() != 3) throw ContractViolation("policy checkpoint row must have 3 fields");
    auto s = static_cast<uint64_t>(csv::parse_int(row[0]));
    auto a = static_cast<uint64_t>(csv::parse_int(row[1]));
    if (s >= p.num_states() || a >= mdp.vocab_size())
      throw ContractViolation("policy checkpoint index out of range");
    p.logits_[s * p.vocab_size_ + a] = csv::parse_double(row[2]);
  }
  return p;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractViolation("tv_distance: length mismatch");
  return 0.5 * kernels::l1_diff(p.data(), q.data(), p.size());
}

Trajectory rollout(const GenerationMdp& mdp, const Policy& policy, Rng& rng) {
  Trajectory traj;
  traj.context = static_cast<ContextId>(rng.categorical(mdp.context_dist()));
  traj.output.reserve(mdp.horizon());
  std::vector<double> row(mdp.vocab_size());
  uint64_t prefix_value = 0;
  for (uint32_t t = 0; t < mdp.horizon(); ++t) {
    StateIndex s = traj.context * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
    policy.fill_probs(s, row);
    auto a = static_cast<TokenId>(rng.categorical(row));
    traj.output.push_back(a);
    prefix_value = prefix_value * mdp.vocab_size() + a;
  }
  return traj;
}

Trajectory rollout(const GenerationMdp& mdp, const Policy& policy, Rng& rng,
                   const RewardFn& reward) {
  Trajectory traj = rollout(mdp, policy, rng);
  traj.terminal_reward = reward.at(traj.context, mdp.output_index(traj.output));
  return traj;
}

Trajectory rollout(const GenerationMdp& mdp, const Policy& policy, uint64_t seed) {
  Rng rng(seed);
  return rollout(mdp, policy, rng);
}

}  // namespace rlhflab
