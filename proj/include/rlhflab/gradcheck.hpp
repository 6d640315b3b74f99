#pragma once

#include <optional>
#include <string>
#include <vector>

namespace rlhflab {

struct GradCheckFailure {
  std::string op;  // mse | bt_nll | sft | pg
  size_t coord = 0;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  uint64_t seed = 0;
  uint64_t coords_checked = 0;
  std::optional<GradCheckFailure> failure;
};

const std::vector<std::string>& gradcheck_ops();

// Central differences (h = 1e-5) against every analytic gradient in the
// library, coordinate by coordinate on small random instances; relative
// error must stay under 1e-4. `corrupt_op` poisons that op's analytic
// gradient before comparing, proving the check can fail.
GradCheckReport run_gradcheck(uint64_t seed, const std::string& corrupt_op = "");

}  // namespace rlhflab
