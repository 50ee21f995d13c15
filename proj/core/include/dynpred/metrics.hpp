#pragma once

#include "dynpred/step_function.hpp"
#include "dynpred/types.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace dynpred {

// Observed outcomes for the cohort being scored, aligned with prediction rows.
struct Outcomes {
  std::vector<double> times;
  std::vector<bool> events;

  int n() const { return static_cast<int>(times.size()); }
};

enum class MetricKind { Brier, TdAuc, CIndex };

std::string metric_name(MetricKind kind);

struct MetricResult {
  MetricKind metric = MetricKind::Brier;
  double landmark = 0.0;
  double horizon = kMissing;  // NaN for the C index
  double value = kMissing;
  std::size_t n_effective = 0;  // contributing subjects (Brier) or pairs
  bool defined = false;
};

// Kaplan-Meier estimate of the censoring survival function G on the landmark
// risk set (event roles inverted); conditional scale G(t|l) = G(t)/G(l).
class CensoringModel {
 public:
  CensoringModel(const Outcomes& outcomes, double landmark);

  double at(double t) const { return km_(t) / km_at_landmark_; }
  double at_left(double t) const { return km_.left(t) / km_at_landmark_; }
  double landmark() const { return landmark_; }

 private:
  StepFunction km_;
  double km_at_landmark_ = 1.0;
  double landmark_ = 0.0;
};

// Graf-style IPCW Brier score at one horizon; censored-before-horizon
// subjects contribute zero.
MetricResult brier_score(const SurvivalPrediction& pred, const Outcomes& outcomes,
                         double landmark, double horizon);

// IPCW cumulative/dynamic time-dependent AUC; risk = 1 - S(horizon | l).
MetricResult td_auc(const SurvivalPrediction& pred, const Outcomes& outcomes,
                    double landmark, double horizon);

// Pairwise concordance truncated at `truncation` (largest evaluation horizon);
// risk scores come from the prediction object.
MetricResult c_index(const SurvivalPrediction& pred, const Outcomes& outcomes,
                     double landmark, double truncation);

}  // namespace dynpred
