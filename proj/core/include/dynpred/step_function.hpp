#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace dynpred {

// Right-continuous step function given by jump times and cumulative values:
// f(t) = values[k] for the largest k with times[k] <= t, and `initial` before
// the first jump. Used for cumulative hazards and Kaplan-Meier curves.
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> times, std::vector<double> values,
               double initial = 0.0)
      : times_(std::move(times)), values_(std::move(values)), initial_(initial) {}

  double operator()(double t) const {
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return initial_;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  // value just before t (left limit)
  double left(double t) const {
    auto it = std::lower_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return initial_;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  bool empty() const { return times_.empty(); }
  double last_time() const { return times_.empty() ? 0.0 : times_.back(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  double initial_ = 0.0;
};

}  // namespace dynpred
