#pragma once

#include "dynpred/lmm.hpp"
#include "dynpred/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace dynpred {

struct ForestConfig {
  int n_trees = 1000;                        // B
  int mtry = 0;                              // F; 0 = ceil(sqrt(#features))
  std::vector<int> node_size_ladder = {15};  // s, advanced on node-level failures
  int min_node_events = 0;                   // e
  std::uint64_t seed = 0;
  int max_split_candidates_per_feature = 9;  // quantile count past 50 distinct values
  int n_threads = 1;
  bool record_split_stats = false;           // keep per-node candidate audit
};

// Evaluated split candidate; written when record_split_stats is on.
struct SplitRecord {
  int tree = 0;
  int node = 0;
  int feature = 0;           // baseline/score column, or longitudinal index
  int longitudinal_q = -1;   // -1 = plain feature
  int blup_component = 0;
  double threshold = 0.0;
  double statistic = 0.0;
  bool valid = false;        // satisfied child-size and event constraints
  bool chosen = false;
};

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;   // members with value <= threshold
  int right = -1;
  int longitudinal_q = -1;  // >= 0: split on a node-local BLUP of covariate q
  int blup_component = 0;   // 0 intercept, 1 slope
  LmmFit lmm;               // frozen node-local fit for prediction-time BLUPs
  // terminal Nelson-Aalen CHF as (global event-time index, increment) pairs
  std::vector<std::pair<int, double>> chf;

  bool terminal() const { return left < 0; }
};

struct SurvivalTree {
  std::vector<TreeNode> nodes;  // node 0 is the root
  std::vector<int> oob_ids;     // original row indices never drawn
  std::vector<SplitRecord> split_log;
};

struct ForestFit {
  ForestConfig config;
  std::vector<double> event_times;  // sorted unique training event times
  std::vector<SurvivalTree> trees;
  int n_features = 0;   // plain feature count (dynforest: baseline count)
  int n_longitudinal = 0;
  bool dynamic = false;

  int n_trees() const { return static_cast<int>(trees.size()); }
};

// Log-rank splitting forest on a fixed numeric feature matrix.
ForestFit fit_rsf(const Eigen::MatrixXd& features, const std::vector<double>& times,
                  const std::vector<bool>& events, const ForestConfig& config);

// DynForest variant: candidates at each node are baseline columns plus the
// longitudinal covariates, each expanded into (u0, u1) by a node-local mixed
// model; the winning node freezes its fit for prediction.
ForestFit fit_dynforest(const LandmarkSlice& slice,
                        const Eigen::MatrixXd& baseline_features,
                        const ForestConfig& config);

SurvivalPrediction predict_forest_survival(
    const ForestFit& fit, const Eigen::MatrixXd& features_new, double landmark,
    const std::vector<double>& horizons,
    const std::vector<std::string>& subject_ids = {});

SurvivalPrediction predict_forest_survival(const ForestFit& fit,
                                           const LandmarkSlice& newslice,
                                           double landmark,
                                           const std::vector<double>& horizons);

// Two-sample log-rank statistic in its squared standardized (chi-square) form.
double logrank_statistic(const std::vector<double>& times,
                         const std::vector<bool>& events,
                         const std::vector<bool>& in_left);

// Per-node split audit as CSV (record_split_stats must have been on).
std::string dump_split_log(const ForestFit& fit);

}  // namespace dynpred
