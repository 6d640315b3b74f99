#include "rlhflab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <thread>

#include "rlhflab/csv.hpp"

namespace rlhflab {

namespace {

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure(name, e.what());
  }
}

void write_resolved_config(const ExperimentConfig& cfg, const std::filesystem::path& run_dir) {
  csv::write_file_atomic(run_dir / "config_resolved.json", config_to_json(cfg).dump(2) + "\n");
}

SweepSettings sweep_settings_from(const ExperimentConfig& cfg) {
  SweepSettings s;
  s.outputs_per_context = cfg.feedback.outputs_per_context;
  s.samples_per_pair = cfg.feedback.samples_per_pair;
  s.beta = cfg.policy.beta;
  s.model_class = cfg.model_class();
  s.features = cfg.feature_kind();
  s.train = cfg.make_train_config();
  return s;
}

std::vector<Trajectory> best_output_demos(const GenerationMdp& mdp, const RewardFn& reward,
                                          uint32_t budget, uint64_t seed) {
  uint64_t n = mdp.num_outputs();
  std::vector<OutputIndex> best(mdp.num_contexts(), 0);
  std::vector<double> row(n);
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    reward.fill_row(c, row);
    OutputIndex arg = 0;
    for (OutputIndex o = 1; o < n; ++o)
      if (row[o] > row[arg]) arg = o;
    best[c] = arg;
  }
  Rng rng(seed);
  std::vector<Trajectory> demos;
  demos.reserve(budget);
  for (uint32_t i = 0; i < budget; ++i) {
    Trajectory d;
    d.context = static_cast<ContextId>(rng.categorical(mdp.context_dist()));
    d.output = mdp.output_at(best[d.context]);
    demos.push_back(std::move(d));
  }
  return demos;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& run_dir) {
  std::filesystem::create_directories(run_dir);
  stage("artifacts", [&] { write_resolved_config(cfg, run_dir); return 0; });

  GenerationMdp mdp = stage("mdp", [&] { return cfg.make_mdp(); });

  OracularReward oracle = stage("oracle", [&] {
    OracularReward o = make_oracle(mdp, cfg.make_reward_spec());
    o.save_csv(run_dir / "oracle_reward.csv");
    return o;
  });

  FeedbackDataset dataset = stage("feedback", [&] {
    std::vector<ContextId> contexts =
        choose_covered_contexts(mdp, cfg.feedback.kappa, cfg.feedback.seed);
    uint64_t per_context = cfg.feedback.outputs_per_context == 0
                               ? mdp.num_outputs()
                               : cfg.feedback.outputs_per_context;
    FeedbackDataset d;
    if (cfg.feedback.mode == "ratings")
      collect_ratings(d, mdp, oracle, contexts, per_context, cfg.feedback.seed + 1);
    else
      collect_bt_preferences(d, mdp, oracle, contexts, per_context, cfg.feedback.samples_per_pair,
                             cfg.feedback.seed + 1);
    d.save_csv(run_dir / "feedback.csv");
    return d;
  });
  CoverageStats coverage = compute_coverage(mdp, dataset);

  RewardModel model = stage("reward_model", [&] {
    RewardModel m = cfg.model_class() == ModelClass::Tabular
                        ? RewardModel::tabular(mdp)
                        : RewardModel::linear(mdp, cfg.feature_kind());
    train(m, dataset, cfg.make_train_config());
    m.save_csv(run_dir / "reward_model.csv");
    return m;
  });

  Policy pre = stage("policy", [&] { return cfg.make_pre_policy(mdp); });
  csv::Table diag;
  diag.header = {"iter", "j_exact", "j_hat", "kl_to_pre", "loss"};
  auto diag_cb = [&diag](const IterStats& st) {
    diag.rows.push_back({std::to_string(st.iter), csv::format_double(st.j_exact),
                         csv::format_double(st.j_hat), csv::format_double(st.kl_to_pre),
                         csv::format_double(st.loss)});
  };
  Policy trained = stage("policy", [&] {
    OptimConfig optim = cfg.make_optim_config();
    if (optim.algorithm == Algorithm::Sft) {
      std::vector<Trajectory> demos =
          best_output_demos(mdp, model, optim.batch_size, optim.seed);
      return train_policy_sft(mdp, demos, pre, optim, &model, &oracle, diag_cb,
                              cfg.policy.diag_every);
    }
    return train_policy(mdp, model, pre, optim, &oracle, diag_cb, cfg.policy.diag_every);
  });
  stage("artifacts", [&] {
    csv::write_table(run_dir / "training_diagnostics.csv", diag);
    trained.save_csv(run_dir / "policy.csv");
    return 0;
  });

  RunSummary summary;
  summary.run_dir = run_dir;
  summary.coverage = coverage;
  summary.gap = stage("analysis", [&] {
    std::vector<double> weights = cfg.eval_weights(mdp);
    return performance_gap(mdp, oracle, model, pre, cfg.policy.beta, dataset.covered_contexts(),
                           weights);
  });

  stage("artifacts", [&] {
    csv::Table t;
    t.header = {"j_star", "j_rlhf", "delta_j", "in_dist_contribution", "ood_contribution",
                "num_eval_contexts", "num_ood_contexts", "kappa", "rho", "kl_rlhf_to_pre",
                "beta"};
    t.rows.push_back({csv::format_double(summary.gap.j_star),
                      csv::format_double(summary.gap.j_rlhf),
                      csv::format_double(summary.gap.delta_j),
                      csv::format_double(summary.gap.in_dist_contribution),
                      csv::format_double(summary.gap.ood_contribution),
                      std::to_string(summary.gap.eval_contexts.size()),
                      std::to_string(summary.gap.ood_contexts.size()),
                      csv::format_double(coverage.kappa), csv::format_double(coverage.rho),
                      csv::format_double(summary.gap.kl_rlhf_to_pre),
                      csv::format_double(cfg.policy.beta)});
    csv::write_table(run_dir / "gap_report.csv", t);
    return 0;
  });
  return summary;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result) {
  csv::Table t;
  t.header = {"sweep_axis", "value", "seed", "delta_j", "j_star", "j_rlhf", "kl_to_pre",
              "ood_mse"};
  for (const auto& pt : result.points)
    t.rows.push_back({result.axis, csv::format_double(pt.axis_value), std::to_string(pt.seed),
                      csv::format_double(pt.delta_j), csv::format_double(pt.j_star),
                      csv::format_double(pt.j_rlhf), csv::format_double(pt.kl_to_pre),
                      csv::format_double(pt.ood_mse)});
  csv::write_table(path, t);
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& axis,
                      const std::filesystem::path& run_dir, unsigned jobs) {
  if (axis != "kappa" && axis != "beta" && axis != "feedback_size")
    throw ConfigError("axis", "unknown sweep axis '" + axis + "'");
  if (jobs == 0) jobs = 1;

  std::filesystem::create_directories(run_dir);
  stage("artifacts", [&] { write_resolved_config(cfg, run_dir); return 0; });

  GenerationMdp mdp = stage("mdp", [&] { return cfg.make_mdp(); });
  OracularReward oracle = stage("oracle", [&] { return make_oracle(mdp, cfg.make_reward_spec()); });
  Policy pre = stage("policy", [&] { return cfg.make_pre_policy(mdp); });
  SweepSettings settings = sweep_settings_from(cfg);

  SweepResult result = stage("analysis", [&]() -> SweepResult {
    if (axis == "beta") {
      // Exact curve for one model trained at the configured coverage.
      std::vector<ContextId> contexts =
          choose_covered_contexts(mdp, cfg.feedback.kappa, cfg.feedback.seed);
      uint64_t per_context = settings.outputs_per_context == 0 ? mdp.num_outputs()
                                                               : settings.outputs_per_context;
      FeedbackDataset dataset;
      if (settings.train.objective == Objective::Mse)
        collect_ratings(dataset, mdp, oracle, contexts, per_context, cfg.feedback.seed + 1);
      else
        collect_bt_preferences(dataset, mdp, oracle, contexts, per_context,
                               settings.samples_per_pair, cfg.feedback.seed + 1);
      RewardModel model = cfg.model_class() == ModelClass::Tabular
                              ? RewardModel::tabular(mdp)
                              : RewardModel::linear(mdp, cfg.feature_kind());
      train(model, dataset, settings.train);
      return beta_sweep(mdp, oracle, model, pre, cfg.analysis.beta_grid,
                        dataset.covered_contexts());
    }

    const bool kappa_axis = axis == "kappa";
    std::vector<double> grid_values;
    if (kappa_axis) {
      grid_values = cfg.analysis.kappa_grid;
    } else {
      for (uint64_t v : cfg.analysis.feedback_size_grid)
        grid_values.push_back(static_cast<double>(v));
    }
    if (grid_values.size() < 2) throw ConfigError("analysis", "sweep needs >= 2 grid points");
    if (cfg.analysis.seeds.empty()) throw ConfigError("analysis.seeds", "must be non-empty");

    struct Cell {
      double value;
      uint64_t seed;
    };
    std::vector<Cell> cells;
    for (double v : grid_values)
      for (uint64_t s : cfg.analysis.seeds) cells.push_back({v, s});

    SweepResult res;
    res.axis = axis;
    res.points.resize(cells.size());
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        try {
          res.points[i] =
              kappa_axis
                  ? coverage_cell(mdp, oracle, pre, cells[i].value, cells[i].seed, settings)
                  : feedback_size_cell(mdp, oracle, pre,
                                       static_cast<uint64_t>(cells[i].value), cells[i].seed,
                                       settings);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    unsigned nthreads = std::min<unsigned>(jobs, static_cast<unsigned>(cells.size()));
    if (nthreads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned k = 0; k < nthreads; ++k) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // Aggregate per grid value (cells are grid-major).
    for (size_t i = 0; i < res.points.size(); i += cfg.analysis.seeds.size()) {
      SweepAggregate agg;
      agg.axis_value = res.points[i].axis_value;
      double sum = 0.0, sum_sq = 0.0, ood = 0.0;
      auto n = static_cast<double>(cfg.analysis.seeds.size());
      for (size_t k = 0; k < cfg.analysis.seeds.size(); ++k) {
        sum += res.points[i + k].delta_j;
        sum_sq += res.points[i + k].delta_j * res.points[i + k].delta_j;
        ood += res.points[i + k].ood_mse;
      }
      agg.mean_delta_j = sum / n;
      agg.mean_ood_mse = ood / n;
      if (n > 1) {
        double var = (sum_sq - sum * agg.mean_delta_j) / (n - 1.0);
        agg.stderr_delta_j = std::sqrt(std::max(0.0, var) / n);
      }
      res.aggregates.push_back(agg);
    }
    return res;
  });

  stage("artifacts", [&] {
    write_sweep_csv(run_dir / "sweep.csv", result);
    nlohmann::json meta;
    meta["axis"] = result.axis;
    meta["config"] = config_to_json(cfg);
    meta["aggregates"] = nlohmann::json::array();
    for (const auto& agg : result.aggregates) {
      nlohmann::json a;
      a["value"] = agg.axis_value;
      a["mean_delta_j"] = agg.mean_delta_j;
      a["stderr_delta_j"] = agg.stderr_delta_j;
      a["mean_ood_mse"] = agg.mean_ood_mse;
      meta["aggregates"].push_back(a);
    }
    csv::write_file_atomic(run_dir / "sweep_meta.json", meta.dump(2) + "\n");
    return 0;
  });
  return result;
}

void print_report(const std::filesystem::path& csv_path) {
  csv::Table t = csv::read_table(csv_path);
  if (t.rows.size() == 1) {
    size_t width = 0;
    for (const auto& h : t.header) width = std::max(width, h.size());
    for (size_t i = 0; i < t.header.size(); ++i)
      std::cout << t.header[i] << std::string(width - t.header[i].size() + 2, ' ')
                << (i < t.rows[0].size() ? t.rows[0][i] : "") << "\n";
    return;
  }
  std::vector<size_t> widths(t.header.size(), 0);
  for (size_t i = 0; i < t.header.size(); ++i) widths[i] = t.header[i].size();
  for (const auto& row : t.rows)
    for (size_t i = 0; i < row.size() && i < widths.size(); ++i)
      widths[i] = std::max(widths[i], row[i].size());
  auto print_row = [&](const std::vector<std::string>& row) {
    for (size_t i = 0; i < row.size(); ++i)
      std::cout << row[i] << std::string(widths[i] - row[i].size() + 2, ' ');
    std::cout << "\n";
  };
  print_row(t.header);
  for (const auto& row : t.rows) print_row(row);
}

}  // namespace rlhflab
