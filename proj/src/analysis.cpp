#include "rlhflab/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "rlhflab/kernels.hpp"

namespace rlhflab {

namespace {

std::vector<double> uniform_weights(uint32_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

void validate_weights(const GenerationMdp& mdp, std::span<const double> w) {
  if (w.size() != mdp.num_contexts())
    throw ContractViolation("eval_dist length must equal num_contexts");
  double total = 0.0;
  for (double p : w) {
    if (!(p >= 0.0)) throw ContractViolation("eval_dist entries must be >= 0");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw ContractViolation("eval_dist must sum to 1 within 1e-12");
}

RewardModel make_model(const GenerationMdp& mdp, const SweepSettings& s) {
  return s.model_class == ModelClass::Tabular ? RewardModel::tabular(mdp)
                                              : RewardModel::linear(mdp, s.features);
}

}  // namespace

std::vector<ContextId> choose_covered_contexts(const GenerationMdp& mdp, double kappa,
                                               uint64_t seed) {
  if (!(kappa > 0.0) || kappa > 1.0)
    throw ContractViolation("kappa must be in (0, 1]");
  auto want = static_cast<uint64_t>(
      std::ceil(kappa * static_cast<double>(mdp.num_contexts()) - 1e-12));
  want = std::max<uint64_t>(1, std::min<uint64_t>(want, mdp.num_contexts()));
  std::vector<ContextId> ids(mdp.num_contexts());
  for (uint32_t i = 0; i < mdp.num_contexts(); ++i) ids[i] = i;
  Rng rng(seed);
  for (uint64_t i = 0; i < want; ++i) {
    uint64_t j = i + rng.uniform_below(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(want);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

SweepPoint gap_to_point(const GapReport& gap, double axis_value, uint64_t seed, double ood_mse) {
  SweepPoint pt;
  pt.axis_value = axis_value;
  pt.seed = seed;
  pt.delta_j = gap.delta_j;
  pt.j_star = gap.j_star;
  pt.j_rlhf = gap.j_rlhf;
  pt.kl_to_pre = gap.kl_rlhf_to_pre;
  pt.ood_mse = ood_mse;
  return pt;
}

void aggregate(SweepResult& result, size_t seeds_per_value) {
  for (size_t i = 0; i < result.points.size(); i += seeds_per_value) {
    SweepAggregate agg;
    agg.axis_value = result.points[i].axis_value;
    double sum = 0.0;
    double sum_sq = 0.0;
    double ood_sum = 0.0;
    for (size_t k = 0; k < seeds_per_value; ++k) {
      double d = result.points[i + k].delta_j;
      sum += d;
      sum_sq += d * d;
      ood_sum += result.points[i + k].ood_mse;
    }
    auto n = static_cast<double>(seeds_per_value);
    agg.mean_delta_j = sum / n;
    agg.mean_ood_mse = ood_sum / n;
    if (seeds_per_value > 1) {
      double var = (sum_sq - sum * agg.mean_delta_j) / (n - 1.0);
      agg.stderr_delta_j = std::sqrt(std::max(0.0, var) / n);
    }
    result.aggregates.push_back(agg);
  }
}

}  // namespace

GapReport performance_gap(const GenerationMdp& mdp, const OracularReward& oracle,
                          const RewardFn& reward_model, const Policy& pre, double beta,
                          const std::set<ContextId>& covered_contexts,
                          std::span<const double> eval_dist) {
  std::vector<double> uniform;
  if (eval_dist.empty()) {
    uniform = uniform_weights(mdp.num_contexts());
    eval_dist = uniform;
  }
  validate_weights(mdp, eval_dist);

  Policy star = closed_form_policy(mdp, pre, oracle, beta);
  star.set_role(PolicyRole::Star);
  Policy rlhf = closed_form_policy(mdp, pre, reward_model, beta);

  GapReport rep;
  uint64_t n = mdp.num_outputs();
  std::vector<double> reward_row(n);
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    double w = eval_dist[c];
    if (w == 0.0) continue;
    rep.eval_contexts.insert(c);
    bool covered = covered_contexts.count(c) > 0;
    if (!covered) rep.ood_contexts.insert(c);
    std::vector<double> p_star = star.output_distribution(mdp, c);
    std::vector<double> p_rlhf = rlhf.output_distribution(mdp, c);
    oracle.fill_row(c, reward_row);
    rep.j_star += w * kernels::dot(p_star.data(), reward_row.data(), n);
    rep.j_rlhf += w * kernels::dot(p_rlhf.data(), reward_row.data(), n);
    double diff = w * kernels::weighted_diff_sum(reward_row.data(), p_star.data(),
                                                 p_rlhf.data(), n);
    if (covered)
      rep.in_dist_contribution += diff;
    else
      rep.ood_contribution += diff;
  }
  rep.delta_j = std::fabs(rep.j_star - rep.j_rlhf);
  rep.kl_rlhf_to_pre = kl_to_pre(mdp, rlhf, pre, eval_dist);
  return rep;
}

SweepPoint coverage_cell(const GenerationMdp& mdp, const OracularReward& oracle,
                         const Policy& pre, double kappa, uint64_t seed,
                         const SweepSettings& settings) {
  std::vector<ContextId> contexts = choose_covered_contexts(mdp, kappa, seed);
  uint64_t per_context =
      settings.outputs_per_context == 0 ? mdp.num_outputs() : settings.outputs_per_context;

  FeedbackDataset dataset;
  if (settings.train.objective == Objective::Mse)
    collect_ratings(dataset, mdp, oracle, contexts, per_context, seed + 1);
  else
    collect_bt_preferences(dataset, mdp, oracle, contexts, per_context,
                           settings.samples_per_pair, seed + 1);

  RewardModel model = make_model(mdp, settings);
  train(model, dataset, settings.train);

  GapReport gap = performance_gap(mdp, oracle, model, pre, settings.beta,
                                  dataset.covered_contexts());
  GeneralizationReport gen = generalization_report(mdp, model, oracle, dataset);
  return gap_to_point(gap, kappa, seed, gen.ood_mse.value_or(0.0));
}

SweepResult coverage_sweep(const GenerationMdp& mdp, const OracularReward& oracle,
                           const Policy& pre, const std::vector<double>& kappa_grid,
                           const std::vector<uint64_t>& seeds, const SweepSettings& settings) {
  if (kappa_grid.size() < 2) throw ContractViolation("coverage_sweep needs >= 2 grid points");
  if (seeds.empty()) throw ContractViolation("coverage_sweep needs >= 1 seed");
  SweepResult result;
  result.axis = "kappa";
  for (double kappa : kappa_grid)
    for (uint64_t seed : seeds)
      result.points.push_back(coverage_cell(mdp, oracle, pre, kappa, seed, settings));
  aggregate(result, seeds.size());
  return result;
}

SweepPoint feedback_size_cell(const GenerationMdp& mdp, const OracularReward& oracle,
                              const Policy& pre, uint64_t outputs_per_context, uint64_t seed,
                              const SweepSettings& settings) {
  SweepSettings cell = settings;
  cell.outputs_per_context = outputs_per_context;
  SweepPoint pt = coverage_cell(mdp, oracle, pre, 1.0, seed, cell);
  pt.axis_value = static_cast<double>(outputs_per_context);
  return pt;
}

SweepResult feedback_size_sweep(const GenerationMdp& mdp, const OracularReward& oracle,
                                const Policy& pre, const std::vector<uint64_t>& size_grid,
                                const std::vector<uint64_t>& seeds,
                                const SweepSettings& settings) {
  if (size_grid.size() < 2) throw ContractViolation("feedback_size_sweep needs >= 2 grid points");
  if (seeds.empty()) throw ContractViolation("feedback_size_sweep needs >= 1 seed");
  SweepResult result;
  result.axis = "feedback_size";
  for (uint64_t size : size_grid)
    for (uint64_t seed : seeds)
      result.points.push_back(feedback_size_cell(mdp, oracle, pre, size, seed, settings));
  aggregate(result, seeds.size());
  return result;
}

SweepResult beta_sweep(const GenerationMdp& mdp, const OracularReward& oracle,
                       const RewardFn& reward_model, const Policy& pre,
                       const std::vector<double>& beta_grid,
                       const std::set<ContextId>& covered_contexts) {
  if (beta_grid.size() < 2) throw ContractViolation("beta_sweep needs >= 2 grid points");
  for (size_t i = 0; i < beta_grid.size(); ++i) {
    if (!(beta_grid[i] > 0.0)) throw ContractViolation("beta grid values must be > 0");
    if (i > 0 && !(beta_grid[i] > beta_grid[i - 1]))
      throw ContractViolation("beta grid must be strictly increasing");
  }
  SweepResult result;
  result.axis = "beta";
  for (double beta : beta_grid) {
    GapReport gap = performance_gap(mdp, oracle, reward_model, pre, beta, covered_contexts);
    result.points.push_back(gap_to_point(gap, beta, 0, 0.0));
  }
  aggregate(result, 1);
  return result;
}

SftVsPgResult sft_vs_pg(const GenerationMdp& mdp, const OracularReward& oracle, const Policy& pre,
                        const std::set<ContextId>& covered_contexts,
                        const std::vector<uint64_t>& seeds, const SftVsPgSettings& settings) {
  if (covered_contexts.empty()) throw ContractViolation("sft_vs_pg needs covered contexts");
  if (seeds.empty()) throw ContractViolation("sft_vs_pg needs >= 1 seed");
  for (ContextId c : covered_contexts) mdp.validate_context(c);
  if (settings.demo_budget == 0) throw ContractViolation("sft_vs_pg: demo_budget must be >= 1");

  // d_C restricted to the covered set and renormalized; complement likewise.
  std::vector<double> crew_dist(mdp.num_contexts(), 0.0);
  std::vector<double> cprime_dist(mdp.num_contexts(), 0.0);
  double crew_mass = 0.0;
  double cprime_mass = 0.0;
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    if (covered_contexts.count(c))
      crew_mass += mdp.context_dist()[c];
    else
      cprime_mass += mdp.context_dist()[c];
  }
  if (crew_mass <= 0.0)
    throw ContractViolation("sft_vs_pg: covered contexts carry no context-distribution mass");
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    if (covered_contexts.count(c))
      crew_dist[c] = mdp.context_dist()[c] / crew_mass;
    else if (cprime_mass > 0.0)
      cprime_dist[c] = mdp.context_dist()[c] / cprime_mass;
  }
  GenerationMdp crew_mdp(mdp.vocab_size(), mdp.horizon(), mdp.num_contexts(), crew_dist);

  // Oracle-optimal output per context, ties to the lower index.
  uint64_t n = mdp.num_outputs();
  std::vector<OutputIndex> best(mdp.num_contexts(), 0);
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    auto row = oracle.row(c);
    OutputIndex arg = 0;
    for (OutputIndex o = 1; o < n; ++o)
      if (row[o] > row[arg]) arg = o;
    best[c] = arg;
  }

  auto weighted_j = [&](const Policy& p, const std::vector<double>& w) {
    double j = 0.0;
    std::vector<double> reward_row(n);
    for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
      if (w[c] == 0.0) continue;
      std::vector<double> dist = p.output_distribution(mdp, c);
      oracle.fill_row(c, reward_row);
      j += w[c] * kernels::dot(dist.data(), reward_row.data(), n);
    }
    return j;
  };

  SftVsPgResult result;
  for (ContextId c = 0; c < mdp.num_contexts(); ++c)
    if (crew_dist[c] > 0.0) result.j_opt_crew += crew_dist[c] * oracle.at(c, best[c]);

  for (uint64_t seed : seeds) {
    // Demos: contexts from the restricted distribution, outputs from the
    // optimal deterministic policy.
    Rng demo_rng(seed);
    std::vector<Trajectory> demos;
    demos.reserve(settings.demo_budget);
    for (uint64_t i = 0; i < settings.demo_budget; ++i) {
      Trajectory d;
      d.context = static_cast<ContextId>(demo_rng.categorical(crew_dist));
      d.output = mdp.output_at(best[d.context]);
      d.terminal_reward = oracle.at(d.context, best[d.context]);
      demos.push_back(std::move(d));
    }
    OptimConfig sft_cfg;
    sft_cfg.algorithm = Algorithm::Sft;
    sft_cfg.step_size = settings.sft_step_size;
    sft_cfg.num_iters = settings.sft_iters;
    Policy sft_policy = train_policy_sft(crew_mdp, demos, pre, sft_cfg);

    OptimConfig pg_cfg = settings.pg;
    pg_cfg.algorithm = Algorithm::VanillaPg;
    pg_cfg.seed = seed;
    Policy pg_policy = train_policy(crew_mdp, oracle, pre, pg_cfg);

    SftVsPgRow row;
    row.seed = seed;
    row.j_sft_crew = weighted_j(sft_policy, crew_dist);
    row.j_pg_crew = weighted_j(pg_policy, crew_dist);
    if (cprime_mass > 0.0) {
      row.j_sft_cprime = weighted_j(sft_policy, cprime_dist);
      row.j_pg_cprime = weighted_j(pg_policy, cprime_dist);
    }
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace rlhflab
