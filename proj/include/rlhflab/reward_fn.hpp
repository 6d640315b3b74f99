#pragma once

#include <span>

#include "rlhflab/mdp.hpp"

namespace rlhflab {

// Anything that scores a finished output given its context. The oracle and
// every learned reward model implement this, so evaluation and policy
// training code is indifferent to which one it is handed.
class RewardFn {
 public:
  virtual ~RewardFn() = default;

  virtual double at(ContextId c, OutputIndex o) const = 0;

  // Rewards for all outputs of context c in canonical order. out.size() must
  // be the output count; override when a contiguous row already exists.
  virtual void fill_row(ContextId c, std::span<double> out) const {
    for (OutputIndex i = 0; i < out.size(); ++i) out[i] = at(c, i);
  }
};

}  // namespace rlhflab
