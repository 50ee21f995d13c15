#include "dynpred/lmm.hpp"

#include "dynpred/csv.hpp"
#include "dynpred/optim.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace dynpred {

namespace {

constexpr double kSigma2Floor = 1e-12;

struct SubjectStats {
  Eigen::Matrix2d zz;   // Z'Z
  Eigen::Vector2d zy;   // Z'y
  double yy = 0.0;      // y'y
  int m = 0;
};

std::vector<SubjectStats> sufficient_stats(const std::vector<LongitudinalObs>& data) {
  std::vector<SubjectStats> stats;
  stats.reserve(data.size());
  for (const auto& obs : data) {
    SubjectStats s;
    s.zz.setZero();
    s.zy.setZero();
    s.m = static_cast<int>(obs.n());
    for (Eigen::Index k = 0; k < obs.n(); ++k) {
      const double t = obs.times[k];
      const double y = obs.values[k];
      s.zz(0, 0) += 1.0;
      s.zz(0, 1) += t;
      s.zz(1, 1) += t * t;
      s.zy[0] += y;
      s.zy[1] += t * y;
      s.yy += y * y;
    }
    s.zz(1, 0) = s.zz(0, 1);
    stats.push_back(s);
  }
  return stats;
}

Eigen::Matrix2d theta_to_g(const Eigen::VectorXd& theta, LmmConstraint c) {
  Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
  switch (c) {
    case LmmConstraint::Full: {
      Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
      l(0, 0) = std::exp(theta[0]);
      l(1, 0) = theta[1];
      l(1, 1) = std::exp(theta[2]);
      g = l * l.transpose();
      break;
    }
    case LmmConstraint::Diagonal:
      g(0, 0) = std::exp(2.0 * theta[0]);
      g(1, 1) = std::exp(2.0 * theta[1]);
      break;
    case LmmConstraint::InterceptOnly:
      g(0, 0) = std::exp(2.0 * theta[0]);
      break;
  }
  return g;
}

int theta_dim(LmmConstraint c) {
  switch (c) {
    case LmmConstraint::Full: return 3;
    case LmmConstraint::Diagonal: return 2;
    case LmmConstraint::InterceptOnly: return 1;
  }
  return 3;
}

struct ProfiledFit {
  Eigen::Vector2d beta;
  double sigma2 = 0.0;
  double logdet_sum = 0.0;
  double deviance = 0.0;  // -2 loglik up to the constant N(log 2pi + 1)
};

// Profiles beta (GLS) and sigma2 (analytic ML) out of the marginal likelihood
// for the scaled covariance G = Sigma / sigma2, reducing every subject to 2x2
// algebra via Woodbury identities.
ProfiledFit profile_at(const std::vector<SubjectStats>& stats, int n_obs,
                       const Eigen::Matrix2d& g) {
  Eigen::Matrix2d a_ww = Eigen::Matrix2d::Zero();
  Eigen::Vector2d a_wy = Eigen::Vector2d::Zero();
  double a_yy = 0.0;
  double logdet_sum = 0.0;
  for (const auto& s : stats) {
    const Eigen::Matrix2d f = Eigen::Matrix2d::Identity() + g * s.zz;
    const double det = f.determinant();
    logdet_sum += std::log(det);
    const Eigen::Matrix2d b = f.inverse() * g;  // symmetric
    a_ww += s.zz - s.zz * b * s.zz;
    a_wy += s.zy - s.zz * b * s.zy;
    a_yy += s.yy - s.zy.dot(b * s.zy);
  }
  ProfiledFit out;
  const double det_ww = a_ww.determinant();
  if (std::abs(det_ww) > 1e-12 * (1.0 + a_ww.squaredNorm())) {
    out.beta = a_ww.inverse() * a_wy;
  } else {
    // rank-deficient design (e.g. all observations at t = 0): minimal-norm beta
    out.beta = a_ww.completeOrthogonalDecomposition().solve(a_wy);
  }
  const double rss =
      a_yy - 2.0 * out.beta.dot(a_wy) + out.beta.dot(a_ww * out.beta);
  const double n = static_cast<double>(n_obs);
  out.sigma2 = std::max(rss / n, kSigma2Floor);
  out.logdet_sum = logdet_sum;
  out.deviance = n * std::log(out.sigma2) + logdet_sum;
  return out;
}

void validate_estimable(const std::vector<LongitudinalObs>& data) {
  int n_obs = 0;
  int n_subjects_with_obs = 0;
  for (const auto& obs : data) {
    n_obs += static_cast<int>(obs.n());
    if (obs.n() > 0) ++n_subjects_with_obs;
  }
  if (n_obs < 3) {
    throw NonEstimableError("mixed model needs at least 3 observations, got " +
                            std::to_string(n_obs));
  }
  if (n_subjects_with_obs < 2) {
    throw NonEstimableError("mixed model needs at least 2 subjects with data");
  }
}

}  // namespace

std::string LmmFit::to_key_value() const {
  std::ostringstream os;
  os << "beta0=" << format_double(beta[0]) << "\n"
     << "beta1=" << format_double(beta[1]) << "\n"
     << "sigma00=" << format_double(sigma(0, 0)) << "\n"
     << "sigma01=" << format_double(sigma(0, 1)) << "\n"
     << "sigma11=" << format_double(sigma(1, 1)) << "\n"
     << "sigma2=" << format_double(sigma2) << "\n"
     << "loglik=" << format_double(loglik) << "\n"
     << "converged=" << (converged ? 1 : 0) << "\n"
     << "fallback_level=" << fallback_level << "\n"
     << "n_subjects=" << n_subjects << "\n"
     << "n_obs=" << n_obs << "\n";
  return os.str();
}

std::vector<LongitudinalObs> extract_covariate(const LandmarkSlice& slice,
                                               int covariate_index) {
  if (covariate_index < 0 || covariate_index >= slice.n_longitudinal()) {
    throw ConfigError("covariate index out of range");
  }
  std::vector<LongitudinalObs> out;
  out.reserve(slice.subjects.size());
  for (const auto& s : slice.subjects) {
    std::vector<double> t, y;
    for (int i = 0; i < s.n_visits(); ++i) {
      const double v = s.longitudinal(i, covariate_index);
      if (is_missing(v)) continue;
      t.push_back(s.visit_times[static_cast<std::size_t>(i)]);
      y.push_back(v);
    }
    LongitudinalObs obs;
    obs.times = Eigen::Map<Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
    obs.values = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    out.push_back(std::move(obs));
  }
  return out;
}

LmmFit fit_lmm_data(const std::vector<LongitudinalObs>& data, LmmConstraint constraint) {
  validate_estimable(data);
  const auto stats = sufficient_stats(data);
  int n_obs = 0;
  int n_subjects = 0;
  double t_max = 0.0;
  for (const auto& obs : data) {
    n_obs += static_cast<int>(obs.n());
    if (obs.n() > 0) ++n_subjects;
    for (Eigen::Index k = 0; k < obs.n(); ++k) t_max = std::max(t_max, std::abs(obs.times[k]));
  }

  // per-observation deviance keeps the gradient criterion scale-free
  const auto objective = [&](const Eigen::VectorXd& theta) {
    return profile_at(stats, n_obs, theta_to_g(theta, constraint)).deviance / n_obs;
  };

  Eigen::VectorXd theta0(theta_dim(constraint));
  const double slope_scale = -0.5 * std::log1p(t_max * t_max);
  switch (constraint) {
    case LmmConstraint::Full:
      theta0 << 0.0, 0.0, slope_scale;
      break;
    case LmmConstraint::Diagonal:
      theta0 << 0.0, slope_scale;
      break;
    case LmmConstraint::InterceptOnly:
      theta0 << 0.0;
      break;
  }

  BfgsOptions options;
  options.grad_tol = 1e-6;
  const BfgsResult opt = bfgs_minimize(objective, theta0, options);
  const Eigen::Matrix2d g = theta_to_g(opt.x, constraint);
  const ProfiledFit prof = profile_at(stats, n_obs, g);

  LmmFit fit;
  fit.beta = prof.beta;
  fit.sigma = prof.sigma2 * g;
  fit.sigma2 = prof.sigma2;
  fit.constraint = constraint;
  fit.converged = opt.converged;
  fit.grad_norm = opt.grad_norm;
  fit.n_subjects = n_subjects;
  fit.n_obs = n_obs;
  const double n = static_cast<double>(n_obs);
  fit.loglik = -0.5 * (n * (std::log(2.0 * std::numbers::pi) + 1.0 +
                            std::log(prof.sigma2)) +
                       prof.logdet_sum);
  return fit;
}

LmmFit fit_lmm_with_fallback(const std::vector<LongitudinalObs>& data) {
  static constexpr LmmConstraint ladder[] = {
      LmmConstraint::Full, LmmConstraint::Diagonal, LmmConstraint::InterceptOnly};
  LmmFit first;
  for (int level = 0; level < 3; ++level) {
    LmmFit fit = fit_lmm_data(data, ladder[level]);
    fit.fallback_level = level;
    if (fit.converged) return fit;
    if (level == 0) first = fit;
  }
  first.fallback_level = 0;
  return first;  // nothing converged; caller sees converged == false
}

LmmFit fit_lmm(const LandmarkSlice& slice, int covariate_index,
               LmmConstraint constraint) {
  return fit_lmm_data(extract_covariate(slice, covariate_index), constraint);
}

RandomEffects predict_blup_data(const LmmFit& fit,
                                const std::vector<LongitudinalObs>& data) {
  RandomEffects re;
  re.u.setZero(static_cast<Eigen::Index>(data.size()), 2);
  if (fit.sigma.isZero(0.0)) return re;  // no between-subject variance
  const double noise = std::max(fit.sigma2, kSigma2Floor);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& obs = data[i];
    const auto m = obs.n();
    if (m == 0) continue;  // prior mean
    Eigen::MatrixXd z(m, 2);
    z.col(0).setOnes();
    z.col(1) = obs.times;
    const Eigen::VectorXd resid = obs.values - z * fit.beta;
    Eigen::MatrixXd v = z * fit.sigma * z.transpose();
    v.diagonal().array() += noise;
    re.u.row(static_cast<Eigen::Index>(i)) =
        (fit.sigma * z.transpose() * v.ldlt().solve(resid)).transpose();
  }
  return re;
}

RandomEffects predict_blup(const LmmFit& fit, const LandmarkSlice& slice,
                           int covariate_index) {
  return predict_blup_data(fit, extract_covariate(slice, covariate_index));
}

RandomEffects predict_blup_newdata(const LmmFit& fit, const LandmarkSlice& newslice,
                                   int covariate_index) {
  return predict_blup_data(fit, extract_covariate(newslice, covariate_index));
}

double lmm_marginal_loglik(const std::vector<LongitudinalObs>& data,
                           const Eigen::Vector2d& beta, const Eigen::Matrix2d& sigma,
                           double sigma2) {
  double loglik = 0.0;
  for (const auto& obs : data) {
    const auto m = obs.n();
    if (m == 0) continue;
    Eigen::MatrixXd z(m, 2);
    z.col(0).setOnes();
    z.col(1) = obs.times;
    Eigen::MatrixXd v = z * sigma * z.transpose();
    v.diagonal().array() += sigma2;
    const Eigen::VectorXd resid = obs.values - z * beta;
    const Eigen::LLT<Eigen::MatrixXd> llt(v);
    double logdet = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
    loglik += -0.5 * (static_cast<double>(m) * std::log(2.0 * std::numbers::pi) +
                      logdet + resid.dot(llt.solve(resid)));
  }
  return loglik;
}

}  // namespace dynpred
