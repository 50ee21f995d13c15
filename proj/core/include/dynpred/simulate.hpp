#pragma once

#include "dynpred/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dynpred {

// Generative model for one longitudinal covariate, plus its loading on the
// hazard through the subject's random intercept and slope.
struct CovariateSim {
  Eigen::Vector2d beta = {0.0, 0.0};       // fixed intercept / slope
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity();
  double sigma2 = 0.25;                    // residual variance
  double link_intercept = 0.0;             // a_q on u0
  double link_slope = 0.0;                 // b_q on u1
};

struct SimConfig {
  int n = 100;
  std::vector<CovariateSim> covariates;
  std::vector<double> visit_grid = {0.0};  // shared schedule, starts at 0
  double weibull_shape = 1.5;
  double weibull_scale = 8.0;
  double censoring_rate = 0.0;             // exponential; 0 = none
  std::uint64_t seed = 0;
};

// Event times follow a Weibull proportional-hazards model whose linear
// predictor loads on the random effects; visits at or after the observed
// time are removed. Deterministic per (config, seed): each subject draws
// from its own derived stream.
Dataset simulate_joint_data(const SimConfig& config);

// Marginal survival when all hazard links are zero (plain Weibull); the
// analytic oracle for the Kaplan-Meier check.
double weibull_survival(const SimConfig& config, double t);

}  // namespace dynpred
