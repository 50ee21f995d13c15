#include "dynpred/simulate.hpp"

#include "dynpred/rng.hpp"

#include <cmath>
#include <string>

namespace dynpred {

namespace {

Eigen::Matrix2d matrix_sqrt(const Eigen::Matrix2d& sigma) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(sigma);
  Eigen::Vector2d vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Dataset simulate_joint_data(const SimConfig& config) {
  if (config.n < 0) throw ConfigError("n must be non-negative");
  if (config.visit_grid.empty() || config.visit_grid.front() != 0.0) {
    throw ConfigError("visit grid must start at 0");
  }
  if (config.weibull_shape <= 0.0 || config.weibull_scale <= 0.0) {
    throw ConfigError("Weibull parameters must be positive");
  }
  if (config.censoring_rate < 0.0) throw ConfigError("censoring rate must be >= 0");

  const int q = static_cast<int>(config.covariates.size());
  Dataset data;
  for (int j = 0; j < q; ++j) data.longitudinal_names.push_back("y" + std::to_string(j + 1));

  std::vector<Eigen::Matrix2d> roots;
  roots.reserve(static_cast<std::size_t>(q));
  for (const auto& cov : config.covariates) roots.push_back(matrix_sqrt(cov.sigma));

  int width = 1;
  for (int n = config.n; n >= 10; n /= 10) ++width;

  for (int i = 0; i < config.n; ++i) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    SubjectRecord subj;
    std::string num = std::to_string(i + 1);
    subj.id = "s" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;

    // random effects and the hazard's linear predictor
    std::vector<Eigen::Vector2d> u(static_cast<std::size_t>(q));
    double eta = 0.0;
    for (int j = 0; j < q; ++j) {
      const Eigen::Vector2d raw(rng.normal(), rng.normal());
      u[static_cast<std::size_t>(j)] = roots[static_cast<std::size_t>(j)] * raw;
      eta += config.covariates[static_cast<std::size_t>(j)].link_intercept * u[static_cast<std::size_t>(j)][0] +
             config.covariates[static_cast<std::size_t>(j)].link_slope * u[static_cast<std::size_t>(j)][1];
    }

    // Weibull PH: H(t) = (t/scale)^shape * exp(eta); invert at a uniform draw
    const double uu = rng.uniform();
    const double t_event = config.weibull_scale *
                           std::pow(-std::log(1.0 - uu) * std::exp(-eta),
                                    1.0 / config.weibull_shape);
    double t_cens = std::numeric_limits<double>::infinity();
    if (config.censoring_rate > 0.0) t_cens = rng.exponential(config.censoring_rate);
    subj.event = t_event <= t_cens;
    subj.event_time = std::min(t_event, t_cens);

    // longitudinal values at scheduled visits strictly before the outcome
    std::vector<double> kept;
    for (double t : config.visit_grid) {
      if (t >= subj.event_time) break;
      kept.push_back(t);
    }
    if (kept.empty()) kept.push_back(0.0);  // unreachable: event_time > 0
    subj.visit_times = kept;
    subj.longitudinal.resize(static_cast<Eigen::Index>(kept.size()), q);
    for (std::size_t v = 0; v < kept.size(); ++v) {
      for (int j = 0; j < q; ++j) {
        const auto& cov = config.covariates[static_cast<std::size_t>(j)];
        const double mean = cov.beta[0] + u[static_cast<std::size_t>(j)][0] +
                            (cov.beta[1] + u[static_cast<std::size_t>(j)][1]) * kept[v];
        subj.longitudinal(static_cast<Eigen::Index>(v), j) =
            mean + rng.normal(0.0, std::sqrt(cov.sigma2));
      }
    }
    data.subjects.push_back(std::move(subj));
  }
  return data;
}

double weibull_survival(const SimConfig& config, double t) {
  return std::exp(-std::pow(t / config.weibull_scale, config.weibull_shape));
}

}  // namespace dynpred
