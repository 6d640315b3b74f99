#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "rlhflab/gradcheck.hpp"
#include "rlhflab/runner.hpp"

namespace {

using namespace rlhflab;

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config", std::string("parse error: ") + e.what());
    }
  }
  for (const std::string& spec : overrides) apply_override(j, spec);
  ExperimentConfig cfg = config_from_json(j);
  if (const char* env = std::getenv("RLHF_LAB_SEED")) {
    char* end = nullptr;
    uint64_t seed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw ConfigError("RLHF_LAB_SEED", std::string("not an integer: '") + env + "'");
    apply_env_seed(cfg, seed);
  }
  return cfg;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_dir) {
  ExperimentConfig cfg = load_config(config_path, overrides);
  std::filesystem::path dir = out_dir.empty() ? cfg.output_dir : out_dir;
  RunSummary summary = run_experiment(cfg, dir);
  std::cout << "run dir: " << summary.run_dir.string() << "\n"
            << "kappa: " << summary.coverage.kappa << "  rho: " << summary.coverage.rho << "\n"
            << "J(pi*): " << summary.gap.j_star << "  J(pi_rlhf): " << summary.gap.j_rlhf
            << "  delta_J: " << summary.gap.delta_j << "\n"
            << "KL(pi_rlhf || pi_pre): " << summary.gap.kl_rlhf_to_pre << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& axis, const std::string& out_dir, unsigned jobs) {
  ExperimentConfig cfg = load_config(config_path, overrides);
  std::filesystem::path dir = out_dir.empty() ? cfg.output_dir : out_dir;
  SweepResult result = run_sweep(cfg, axis, dir, jobs);
  std::cout << "sweep axis: " << result.axis << "  points: " << result.points.size() << "\n";
  for (const auto& agg : result.aggregates)
    std::cout << "  " << axis << "=" << agg.axis_value << "  mean delta_J=" << agg.mean_delta_j
              << "  se=" << agg.stderr_delta_j << "  mean ood_mse=" << agg.mean_ood_mse << "\n";
  return 0;
}

int cmd_gradcheck(uint64_t seed, const std::string& corrupt) {
  GradCheckReport report = run_gradcheck(seed, corrupt);
  if (report.failure) {
    const GradCheckFailure& f = *report.failure;
    std::cout << "gradcheck FAILED op=" << f.op << " coord=" << f.coord
              << " analytic=" << f.analytic << " fd=" << f.fd << " rel_err=" << f.rel_err
              << "\n";
    return 1;
  }
  std::cout << "gradcheck OK seed=" << report.seed << " coords=" << report.coords_checked
            << " ops=";
  for (size_t i = 0; i < gradcheck_ops().size(); ++i)
    std::cout << (i ? "," : "") << gradcheck_ops()[i];
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale RLHF laboratory: exact small-MDP pipelines for studying "
               "reward-model misspecification and KL-regularized policy optimization"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis, corrupt, report_path;
  std::vector<std::string> overrides;
  unsigned jobs = 1;
  uint64_t seed = 0;

  CLI::App* run = app.add_subcommand("run", "Run the full pipeline and write artifacts");
  run->add_option("--config", config_path, "Experiment config (JSON); omit for defaults");
  run->add_option("--set", overrides, "Override section.key=value (repeatable)");
  run->add_option("--out", out_dir, "Output directory (default: config output_dir)");

  CLI::App* sweep = app.add_subcommand("sweep", "Sweep kappa, beta, or feedback_size");
  sweep->add_option("--config", config_path, "Experiment config (JSON); omit for defaults");
  sweep->add_option("--axis", axis, "kappa | beta | feedback_size")->required();
  sweep->add_option("--set", overrides, "Override section.key=value (repeatable)");
  sweep->add_option("--out", out_dir, "Output directory (default: config output_dir)");
  sweep->add_option("--jobs", jobs, "Worker threads (artifacts identical for any value)");

  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference audit of all gradients");
  grad->add_option("--seed", seed, "Instance seed");
  grad->add_option("--corrupt", corrupt, "Poison one op's gradient (mse|bt_nll|sft|pg)");

  CLI::App* report = app.add_subcommand("report", "Pretty-print a gap_report.csv or sweep.csv");
  report->add_option("path", report_path, "CSV file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, overrides, out_dir);
    if (sweep->parsed()) return cmd_sweep(config_path, overrides, axis, out_dir, jobs);
    if (grad->parsed()) return cmd_gradcheck(seed, corrupt);
    rlhflab::print_report(report_path);
    return 0;
  } catch (const rlhflab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rlhflab::StageFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
