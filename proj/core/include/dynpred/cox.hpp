#pragma once

#include "dynpred/step_function.hpp"
#include "dynpred/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace dynpred {

// Proportional-hazards fit: Breslow-tie partial likelihood maximized by
// Newton-Raphson with step-halving, optional ridge penalty (applied on the
// internally standardized scale), and Breslow cumulative baseline hazard.
struct CoxFit {
  Eigen::VectorXd coefficients;      // on the original feature scale
  Eigen::VectorXd feature_means;
  Eigen::VectorXd feature_sds;       // 1 for constant columns (coef forced 0)
  double penalty = 0.0;
  double loglik = 0.0;               // unpenalized partial log-likelihood
  bool converged = false;
  bool stabilized = false;           // retried with a tiny ridge
  StepFunction cumulative_hazard;    // Breslow baseline for x = 0

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const {
    return x * coefficients;
  }
  Eigen::VectorXd standardized_coefficients() const {
    return coefficients.cwiseProduct(feature_sds);
  }
};

CoxFit fit_cox(const Eigen::MatrixXd& features, const std::vector<double>& times,
               const std::vector<bool>& events, double penalty = 0.0);

// Breslow partial log-likelihood (and score) at arbitrary coefficients, on the
// scale of the features passed in. Used by the penalty CV and by tests.
double cox_partial_loglik(const Eigen::MatrixXd& features,
                          const std::vector<double>& times,
                          const std::vector<bool>& events,
                          const Eigen::VectorXd& coef);
Eigen::VectorXd cox_partial_score(const Eigen::MatrixXd& features,
                                  const std::vector<double>& times,
                                  const std::vector<bool>& events,
                                  const Eigen::VectorXd& coef);

std::vector<double> default_lambda_grid(int size = 30, double lo = 1e-3,
                                        double hi = 1e3);

struct RidgeSelection {
  double lambda = 0.0;
  bool all_failed = false;                 // grid midpoint returned
  std::vector<double> cv_loglik;           // per grid value; NaN where failed
};

// k-fold cross-validated partial-likelihood deviance (van Houwelingen):
// cvl(lambda) = sum_f [ loglik(all; b_-f) - loglik(without fold f; b_-f) ].
RidgeSelection select_ridge_penalty(const Eigen::MatrixXd& features,
                                    const std::vector<double>& times,
                                    const std::vector<bool>& events, int folds,
                                    const std::vector<double>& lambda_grid,
                                    std::uint64_t seed = 0x9d2c5680u);

// S_i(t | l) = exp(-[H0(t) - H0(l)] exp(eta_i)); risk_scores = eta.
SurvivalPrediction predict_conditional_survival(
    const CoxFit& fit, const Eigen::MatrixXd& features_new, double landmark,
    const std::vector<double>& horizons,
    const std::vector<std::string>& subject_ids = {});

}  // namespace dynpred
