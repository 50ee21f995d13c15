#pragma once

#include "dynpred/types.hpp"

#include <string>
#include <vector>

namespace dynpred {

// Why subjects were excluded at load and what alignment dropped.
struct LoadReport {
  int n_read = 0;
  int n_retained = 0;
  std::vector<std::string> excluded_missing_baseline;      // rule (a)
  std::vector<std::string> excluded_missing_baseline_long; // rule (b)
  std::vector<std::string> excluded_no_baseline_visit;
  std::string summary() const;
};

struct LoadResult {
  Dataset dataset;
  LoadReport report;
};

// Reads the two-file schema: baseline CSV (id,event_time,event_indicator,...)
// and long-format longitudinal CSV (id,time,...). Categorical baseline columns
// are one-hot encoded with the lexicographically first level as reference.
// Subjects violating the exclusion rules are dropped and counted; invariant
// violations on retained subjects (duplicate ids, duplicate (id,time) pairs,
// visits at or after the event time) raise DataError with row context.
LoadResult load_dataset(const std::string& baseline_csv,
                        const std::string& longitudinal_csv);

// Canonical CSV emission; load_dataset(write_dataset(d)) == d exactly.
void write_dataset(const Dataset& data, const std::string& baseline_csv,
                   const std::string& longitudinal_csv);

// At-risk cohort {i : event_time_i > landmark} with history truncated at the
// landmark (strict) or kept whole (relaxed). Visits at exactly the landmark
// are kept in strict mode; the baseline visit always survives truncation.
LandmarkSlice make_landmark_slice(const Dataset& data, double landmark,
                                  LandmarkMode mode);

struct AlignResult {
  LandmarkSlice slice;
  int dropped_visits = 0;
};

// Snaps visit times to the nearest grid point within tolerance; visits farther
// than the tolerance from every grid point are dropped, and when two visits
// snap to the same point the later one wins. Pass tolerance <= 0 for the
// default of half the smallest grid gap.
AlignResult align_to_grid(const LandmarkSlice& slice,
                          const std::vector<double>& grid,
                          double tolerance = -1.0);

// Adjusted Fisher-Pearson sample skewness; NaN when fewer than 3 values.
double sample_skewness(const std::vector<double>& values);

// Skewness rule fitted on pooled training values: skew > 1 -> log (offset
// 1 - min when min <= 0), skew < -1 -> cubic, otherwise identity.
TransformSpec fit_transform_spec(const LandmarkSlice& slice);

LandmarkSlice apply_transform(const LandmarkSlice& slice, const TransformSpec& spec);

}  // namespace dynpred
