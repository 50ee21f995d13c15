#pragma once

// Test-only oracles, written independently of the library's computation
// paths: naive written-out formulas, dense joint-normal conditioning, and
// brute-force maximizers. They stay deliberately slow and literal.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace dynpred::oracle {

// Breslow partial log-likelihood, written out naively: for every event i,
// eta_i - log sum_{j : t_j >= t_i} exp(eta_j). O(n^2) on purpose.
inline double naive_partial_loglik(const std::vector<double>& x,
                                   const std::vector<double>& times,
                                   const std::vector<bool>& events, double beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!events[i]) continue;
    double denom = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (times[j] >= times[i]) denom += std::exp(beta * x[j]);
    }
    ll += beta * x[i] - std::log(denom);
  }
  return ll;
}

// Two-stage grid search maximizer of the 1-D partial likelihood.
inline double grid_search_beta(const std::vector<double>& x,
                               const std::vector<double>& times,
                               const std::vector<bool>& events) {
  double best_b = 0.0;
  double best_ll = -1e300;
  for (double b = -4.0; b <= 4.0; b += 1e-3) {
    const double ll = naive_partial_loglik(x, times, events, b);
    if (ll > best_ll) {
      best_ll = ll;
      best_b = b;
    }
  }
  const double lo = best_b - 2e-3, hi = best_b + 2e-3;
  for (double b = lo; b <= hi; b += 1e-6) {
    const double ll = naive_partial_loglik(x, times, events, b);
    if (ll > best_ll) {
      best_ll = ll;
      best_b = b;
    }
  }
  return best_b;
}

// BLUP via dense joint-normal conditioning: build the covariance of the joint
// vector (u, y) explicitly and condition, E[u|y] = C_uy C_yy^{-1} (y - mu).
inline Eigen::Vector2d joint_normal_blup(const Eigen::VectorXd& t,
                                         const Eigen::VectorXd& y,
                                         const Eigen::Vector2d& beta,
                                         const Eigen::Matrix2d& sigma,
                                         double sigma2) {
  const auto m = t.size();
  Eigen::MatrixXd z(m, 2);
  z.col(0).setOnes();
  z.col(1) = t;
  Eigen::MatrixXd joint(2 + m, 2 + m);
  joint.topLeftCorner(2, 2) = sigma;
  joint.topRightCorner(2, m) = sigma * z.transpose();
  joint.bottomLeftCorner(m, 2) = z * sigma;
  joint.bottomRightCorner(m, m) =
      z * sigma * z.transpose() + sigma2 * Eigen::MatrixXd::Identity(m, m);
  const Eigen::VectorXd mu_y = z * beta;
  return joint.topRightCorner(2, m) *
         joint.bottomRightCorner(m, m).fullPivLu().solve(y - mu_y);
}

// Nelson-Aalen increments d_t / n_t, written out naively.
inline std::vector<std::pair<double, double>> naive_nelson_aalen(
    const std::vector<double>& times, const std::vector<bool>& events) {
  std::vector<double> distinct;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (events[i]) distinct.push_back(times[i]);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<std::pair<double, double>> out;
  for (double t : distinct) {
    int d = 0, at_risk = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] >= t) ++at_risk;
      if (times[i] == t && events[i]) ++d;
    }
    out.emplace_back(t, static_cast<double>(d) / at_risk);
  }
  return out;
}

// Breslow baseline increments at given coefficients, naive risk-set sums.
inline std::vector<std::pair<double, double>> naive_breslow(
    const Eigen::MatrixXd& x, const std::vector<double>& times,
    const std::vector<bool>& events, const Eigen::VectorXd& coef) {
  std::vector<double> distinct;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (events[i]) distinct.push_back(times[i]);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<std::pair<double, double>> out;
  for (double t : distinct) {
    int d = 0;
    double denom = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (times[static_cast<std::size_t>(i)] >= t) denom += std::exp(x.row(i).dot(coef));
      if (times[static_cast<std::size_t>(i)] == t && events[static_cast<std::size_t>(i)]) ++d;
    }
    out.emplace_back(t, d / denom);
  }
  return out;
}

}  // namespace dynpred::oracle
