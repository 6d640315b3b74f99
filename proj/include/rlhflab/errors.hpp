#pragma once

#include <stdexcept>
#include <string>

namespace rlhflab {

// Precondition breach by the caller (bad arguments, wrong state).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// A requested enumeration or sample count exceeds what the instance allows.
// The message names the offending cap or budget.
class SizeError : public std::runtime_error {
 public:
  explicit SizeError(const std::string& what) : std::runtime_error(what) {}
};

// Optimization failed (divergence, non-finite loss). Carries the epoch or
// iteration at which the failure was detected.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, long long epoch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  long long epoch() const { return epoch_; }

 private:
  long long epoch_;
};

// Invalid or unknown experiment configuration. Carries the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace rlhflab
