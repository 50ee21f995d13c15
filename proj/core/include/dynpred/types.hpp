#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynpred {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

/// Model cannot be estimated from the given data (too few observations, ...).
struct NonEstimableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Cox partial likelihood diverges (complete separation / monotone likelihood).
struct MonotoneLikelihoodError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A whole pipeline fit failed; the harness records the fold as failed.
struct FitFailedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad input data (malformed CSV, invariant violations at load).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

// One subject: baseline covariates, visit history and survival outcome.
// `longitudinal` is m x Q with NaN marking a missing measurement.
struct SubjectRecord {
  std::string id;
  double event_time = 0.0;  // min(T, C)
  bool event = false;       // true = event observed
  std::vector<double> baseline;
  std::vector<double> visit_times;  // strictly increasing, first = 0
  Eigen::MatrixXd longitudinal;     // visit_times.size() x Q

  int n_visits() const { return static_cast<int>(visit_times.size()); }
};

struct Dataset {
  std::vector<SubjectRecord> subjects;
  std::vector<std::string> baseline_names;
  std::vector<std::string> longitudinal_names;

  int n() const { return static_cast<int>(subjects.size()); }
  int n_baseline() const { return static_cast<int>(baseline_names.size()); }
  int n_longitudinal() const { return static_cast<int>(longitudinal_names.size()); }
};

enum class LandmarkMode { Strict, Relaxed };

// At-risk cohort at a landmark with per-subject covariate history H_i(l).
// In strict mode visits after the landmark are removed; visits at exactly the
// landmark are kept.
struct LandmarkSlice {
  double landmark = 0.0;
  LandmarkMode mode = LandmarkMode::Strict;
  std::vector<SubjectRecord> subjects;
  std::vector<std::string> baseline_names;
  std::vector<std::string> longitudinal_names;

  int n() const { return static_cast<int>(subjects.size()); }
  int n_baseline() const { return static_cast<int>(baseline_names.size()); }
  int n_longitudinal() const { return static_cast<int>(longitudinal_names.size()); }
  std::vector<std::string> risk_set_ids() const {
    std::vector<std::string> ids;
    ids.reserve(subjects.size());
    for (const auto& s : subjects) ids.push_back(s.id);
    return ids;
  }
};

enum class TransformKind { Identity, Log, Cubic };

// Per-covariate monotone transform chosen from training-data skewness.
struct TransformSpec {
  std::vector<TransformKind> kind;
  std::vector<double> log_offset;           // used when kind == Log
  std::vector<int> low_count_covariates;    // identity forced, < 3 values

  int size() const { return static_cast<int>(kind.size()); }
};

// ---------------------------------------------------------------------------
// Predictions
// ---------------------------------------------------------------------------

// Conditional survival probabilities S_i(t | l) over subjects x horizons,
// the common currency of all pipelines and metrics.
struct SurvivalPrediction {
  double landmark = 0.0;
  std::vector<double> horizons;       // all > landmark
  Eigen::MatrixXd survival;           // n x horizons.size(), rows non-increasing
  std::vector<double> risk_scores;    // per-subject scalar for ranking metrics
  std::vector<std::string> subject_ids;
  bool extrapolated = false;          // some horizon lay beyond the last hazard jump

  int n() const { return static_cast<int>(survival.rows()); }
};

}  // namespace dynpred
