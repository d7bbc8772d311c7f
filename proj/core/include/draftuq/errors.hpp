#pragma once

#include <stdexcept>
#include <string>

namespace draftuq {

// Bad caller-supplied values: malformed configs, shape mismatches, out-of-range ids.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite loss or other unrecoverable optimizer state; carries the step index.
class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

// Correlation undefined because an argument has zero variance.
class UndefinedCorrelation : public std::runtime_error {
 public:
  explicit UndefinedCorrelation(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace draftuq
