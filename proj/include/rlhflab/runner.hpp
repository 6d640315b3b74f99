#pragma once

#include <filesystem>

#include "rlhflab/config.hpp"

namespace rlhflab {

// Non-config failure attributed to a pipeline stage (mdp, oracle, feedback,
// reward_model, policy, analysis, artifacts).
class StageFailure : public std::runtime_error {
 public:
  StageFailure(const std::string& stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunSummary {
  std::filesystem::path run_dir;
  GapReport gap;
  CoverageStats coverage;
};

// Full pipeline: oracle -> feedback -> reward model -> policy training ->
// gap analysis, with artifacts (six CSVs + the frozen resolved config)
// written under run_dir. Deterministic: same config, same bytes.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

// Sweep one axis over a grid x seed lattice; cells may run on up to `jobs`
// threads (each cell is single-threaded and seeded independently, and rows
// are emitted in lattice order, so the artifact bytes do not depend on
// `jobs`). Writes sweep.csv and sweep_meta.json under run_dir.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& axis,
                      const std::filesystem::path& run_dir, unsigned jobs = 1);

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result);

// Pretty-print a gap_report.csv or sweep.csv to stdout.
void print_report(const std::filesystem::path& csv_path);

}  // namespace rlhflab
