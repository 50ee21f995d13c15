#pragma once

#include "dynpred/csv.hpp"
#include "dynpred/metrics.hpp"
#include "dynpred/pipelines.hpp"
#include "dynpred/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dynpred {

struct CvPlan {
  int folds = 5;
  int repetitions = 10;
  std::uint64_t seed = 0;
};

// One aggregated cell: metric mean and the sd of repetition-level means.
struct BenchmarkRow {
  std::string method;
  double landmark = 0.0;
  double horizon = kMissing;  // NaN for the C index
  std::string metric;
  double mean = kMissing;     // NaN = missing (failed on all folds)
  double sd = kMissing;
  int n_failed = 0;           // failed (repetition, fold) fits at this landmark
  double mean_fit_seconds = kMissing;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<std::string> failure_log;  // one line per failed fit

  // true when some method failed on every fold of some landmark
  bool any_method_all_failed = false;
};

// Stratified fold assignment on the event indicator; returns fold id per
// subject. Deterministic in (seed, repetition).
std::vector<int> assign_folds(const Dataset& data, int folds, std::uint64_t seed,
                              int repetition);

// Repeated stratified k-fold cross-validation of the given methods over the
// landmark/horizon grid. Slicing happens inside the fold loop: training folds
// are landmarked and fitted, the held-out fold is landmarked strictly and
// scored. Failed fits are recorded, not fatal.
BenchmarkResult run_benchmark(const Dataset& data,
                              const std::vector<MethodSpec>& methods,
                              const std::vector<double>& landmarks,
                              const std::vector<std::vector<double>>& horizons,
                              const CvPlan& plan,
                              LandmarkMode mode = LandmarkMode::Strict,
                              int n_threads = 1);

struct AblationBlock {
  double fraction = 1.0;
  bool skipped = false;  // too few subjects for the fold count
  BenchmarkResult result;
};

enum class AblationAxis { Subjects, Predictors };

// Re-runs the benchmark on nested subsamples of subjects or covariates.
std::vector<AblationBlock> subsample_ablation(
    const Dataset& data, const std::vector<double>& fractions, AblationAxis axis,
    const std::vector<MethodSpec>& methods, const std::vector<double>& landmarks,
    const std::vector<std::vector<double>>& horizons, const CvPlan& plan,
    std::uint64_t subsample_seed = 1, LandmarkMode mode = LandmarkMode::Strict,
    int n_threads = 1);

// results CSV: method,landmark,horizon,metric,mean,sd,n_failed,mean_fit_seconds
CsvTable results_to_csv(const BenchmarkResult& result);
BenchmarkResult results_from_csv(const CsvTable& table);

// timing CSV: one row per method, one column per landmark plus the average
CsvTable timing_to_csv(const BenchmarkResult& result);

}  // namespace dynpred
