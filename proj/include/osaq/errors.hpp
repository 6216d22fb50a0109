#pragma once

#include <stdexcept>
#include <string>

namespace osaq {

// Load at or beyond the stability boundary. `utilization` is the offending load.
class SaturatedQueue : public std::runtime_error {
 public:
  SaturatedQueue(const std::string& where, double utilization)
      : std::runtime_error(where + ": saturated queue (utilization " +
                           std::to_string(utilization) + ")"),
        utilization_(utilization) {}

  double utilization() const { return utilization_; }

 private:
  double utilization_;
};

// Input outside what the closed-form engine covers (e.g. non-exponential Y).
class UnsupportedAnalytic : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kStabilityMargin = 1e-6;

inline void require_stable(double utilization, const std::string& where) {
  if (!(utilization < 1.0 - kStabilityMargin)) throw SaturatedQueue(where, utilization);
}

}  // namespace osaq
