#pragma once

#include "dynpred/types.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace dynpred {

// One subject's non-missing (time, value) pairs for a single covariate.
struct LongitudinalObs {
  Eigen::VectorXd times;
  Eigen::VectorXd values;

  Eigen::Index n() const { return times.size(); }
};

enum class LmmConstraint { Full, Diagonal, InterceptOnly };

// Random-intercept / random-slope linear mixed model
//   y_ij = beta0 + u_i0 + (beta1 + u_i1) t_ij + eps_ij,
// fitted by ML: beta profiled out by GLS, sigma2 profiled analytically, and
// the scaled random-effects covariance optimized over a log-Cholesky
// parameterization (which keeps Sigma PSD by construction).
struct LmmFit {
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();  // random-effects covariance
  double sigma2 = 0.0;                              // residual variance
  double loglik = 0.0;
  double grad_norm = 0.0;  // final max-norm gradient of the profiled deviance
  bool converged = false;
  LmmConstraint constraint = LmmConstraint::Full;
  int fallback_level = 0;  // 0 full, 1 diagonal, 2 intercept-only
  int n_subjects = 0;
  int n_obs = 0;

  std::string to_key_value() const;
};

// Per-subject predicted random effects (BLUPs), rows follow the input order.
struct RandomEffects {
  Eigen::MatrixXd u;  // n x 2, (u0, u1); prior mean (0,0) for empty subjects

  int n() const { return static_cast<int>(u.rows()); }
};

// Pulls subject-level (time, value) arrays for one covariate; missing values
// are silently skipped.
std::vector<LongitudinalObs> extract_covariate(const LandmarkSlice& slice,
                                               int covariate_index);

LmmFit fit_lmm_data(const std::vector<LongitudinalObs>& data,
                    LmmConstraint constraint = LmmConstraint::Full);

// Tries Full, then Diagonal, then InterceptOnly until one converges;
// fallback_level records how far down the ladder the fit went.
LmmFit fit_lmm_with_fallback(const std::vector<LongitudinalObs>& data);

LmmFit fit_lmm(const LandmarkSlice& slice, int covariate_index,
               LmmConstraint constraint = LmmConstraint::Full);

// u_i = Sigma Z_i' V_i^{-1} (y_i - W_i beta) with V_i = Z_i Sigma Z_i' + sigma2 I,
// computed on each subject's non-missing rows.
RandomEffects predict_blup_data(const LmmFit& fit,
                                const std::vector<LongitudinalObs>& data);

RandomEffects predict_blup(const LmmFit& fit, const LandmarkSlice& slice,
                           int covariate_index);

// Same computation against a frozen training fit; validation-fold subjects get
// summaries without touching the fit.
RandomEffects predict_blup_newdata(const LmmFit& fit, const LandmarkSlice& newslice,
                                   int covariate_index);

// Marginal Gaussian log-likelihood of the model at the given parameters;
// exposed for oracle tests.
double lmm_marginal_loglik(const std::vector<LongitudinalObs>& data,
                           const Eigen::Vector2d& beta, const Eigen::Matrix2d& sigma,
                           double sigma2);

}  // namespace dynpred
