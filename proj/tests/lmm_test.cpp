#include "dynpred/lmm.hpp"

#include "dynpred/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace dynpred;
using namespace dynpred::testing;

namespace {

// balanced longitudinal sample from the random-intercept/slope model
std::vector<LongitudinalObs> simulate_lmm(int n, const std::vector<double>& visits,
                                          const Eigen::Vector2d& beta,
                                          const Eigen::Matrix2d& sigma, double sigma2,
                                          std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::LLT<Eigen::Matrix2d> llt(sigma);
  Eigen::Matrix2d root = Eigen::Matrix2d::Zero();
  if (llt.info() == Eigen::Success) root = llt.matrixL();
  std::vector<LongitudinalObs> data;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d u = root * Eigen::Vector2d(rng.normal(), rng.normal());
    LongitudinalObs obs;
    obs.times.resize(static_cast<Eigen::Index>(visits.size()));
    obs.values.resize(static_cast<Eigen::Index>(visits.size()));
    for (std::size_t k = 0; k < visits.size(); ++k) {
      obs.times[static_cast<Eigen::Index>(k)] = visits[k];
      obs.values[static_cast<Eigen::Index>(k)] =
          beta[0] + u[0] + (beta[1] + u[1]) * visits[k] +
          rng.normal(0.0, std::sqrt(sigma2));
    }
    data.push_back(std::move(obs));
  }
  return data;
}

}  // namespace

TEST_CASE("fit_lmm recovers generating parameters within Monte Carlo error") {
  const Eigen::Vector2d beta(1.0, 0.5);
  Eigen::Matrix2d sigma;
  sigma << 0.4, 0.0, 0.0, 0.1;
  const auto data = simulate_lmm(300, {0, 1, 2, 3, 4, 5}, beta, sigma, 0.25, 42);
  const LmmFit fit = fit_lmm_data(data);
  REQUIRE(fit.converged);
  // 3 Monte Carlo standard errors of the generating values
  CHECK(std::abs(fit.beta[0] - 1.0) < 0.12);
  CHECK(std::abs(fit.beta[1] - 0.5) < 0.06);
  CHECK(std::abs(fit.sigma(0, 0) - 0.4) < 0.15);
  CHECK(std::abs(fit.sigma(1, 1) - 0.1) < 0.04);
  CHECK(std::abs(fit.sigma2 - 0.25) < 0.03);
  CHECK(fit.n_subjects == 300);
  CHECK(fit.n_obs == 1800);

  SUBCASE("final gradient of the profiled deviance is small") {
    CHECK(fit.grad_norm < 1e-6);
  }
  SUBCASE("Sigma is PSD") {
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(fit.sigma);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("identical flat trajectories collapse to the degenerate fit") {
  std::vector<LongitudinalObs> data;
  for (int i = 0; i < 10; ++i) {
    LongitudinalObs obs;
    obs.times = Eigen::Vector3d(0, 1, 2);
    obs.values = Eigen::Vector3d(4.2, 4.2, 4.2);
    data.push_back(obs);
  }
  const LmmFit fit = fit_lmm_data(data);
  CHECK(fit.beta[0] == doctest::Approx(4.2).epsilon(1e-9));
  CHECK(std::abs(fit.beta[1]) < 1e-8);
  CHECK(fit.sigma.norm() < 1e-6);
  CHECK(fit.sigma2 < 1e-6);
}

TEST_CASE("log-likelihood matches the direct multivariate-normal density") {
  // balanced 2-subject toy with a known V
  const auto data = simulate_lmm(2, {0, 1, 2}, {0.5, -0.2},
                                 (Eigen::Matrix2d() << 0.3, 0.05, 0.05, 0.2).finished(),
                                 0.1, 5);
  const LmmFit fit = fit_lmm_data(data);
  const double direct = lmm_marginal_loglik(data, fit.beta, fit.sigma, fit.sigma2);
  CHECK(fit.loglik == doctest::Approx(direct).epsilon(1e-10));

  SUBCASE("the reported optimum is a local maximum of the direct density") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::Vector2d beta_p =
          fit.beta + 0.05 * Eigen::Vector2d(rng.normal(), rng.normal());
      CHECK(lmm_marginal_loglik(data, beta_p, fit.sigma, fit.sigma2) <=
            fit.loglik + 1e-9);
    }
  }
}

TEST_CASE("fewer than 3 observations is non-estimable") {
  std::vector<LongitudinalObs> data(2);
  data[0].times = Eigen::VectorXd::Zero(1);
  data[0].values = Eigen::VectorXd::Ones(1);
  data[1].times = Eigen::VectorXd::Zero(1);
  data[1].values = Eigen::VectorXd::Ones(1);
  CHECK_THROWS_AS(fit_lmm_data(data), NonEstimableError);

  SUBCASE("a single subject with data is non-estimable too") {
    std::vector<LongitudinalObs> one(1);
    one[0].times = Eigen::Vector3d(0, 1, 2);
    one[0].values = Eigen::Vector3d(1, 2, 3);
    CHECK_THROWS_AS(fit_lmm_data(one), NonEstimableError);
  }
}

TEST_CASE("predict_blup matches the joint-normal conditioning oracle") {
  const auto data = simulate_lmm(4, {0, 1, 2, 3}, {1.0, 0.3},
                                 (Eigen::Matrix2d() << 0.5, 0.1, 0.1, 0.2).finished(),
                                 0.15, 17);
  const LmmFit fit = fit_lmm_data(data);
  const RandomEffects re = predict_blup_data(fit, data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Eigen::Vector2d expect = oracle::joint_normal_blup(
        data[i].times, data[i].values, fit.beta, fit.sigma, fit.sigma2);
    CHECK(std::abs(re.u(static_cast<Eigen::Index>(i), 0) - expect[0]) < 1e-8);
    CHECK(std::abs(re.u(static_cast<Eigen::Index>(i), 1) - expect[1]) < 1e-8);
  }
}

TEST_CASE("BLUP edge cases") {
  LmmFit fit;
  fit.beta = {2.0, 0.5};
  fit.sigma << 0.4, 0.0, 0.0, 0.1;
  fit.sigma2 = 0.2;

  SUBCASE("single observation at the population mean gives zero BLUP") {
    std::vector<LongitudinalObs> data(1);
    data[0].times = Eigen::VectorXd::Zero(1);
    data[0].values = Eigen::VectorXd::Constant(1, 2.0);  // equals beta0 at t = 0
    const RandomEffects re = predict_blup_data(fit, data);
    CHECK(re.u(0, 0) == 0.0);
    CHECK(re.u(0, 1) == 0.0);
  }
  SUBCASE("zero-observation subjects get the prior mean") {
    std::vector<LongitudinalObs> data(2);
    data[1].times = Eigen::VectorXd::Zero(1);
    data[1].values = Eigen::VectorXd::Constant(1, 5.0);
    const RandomEffects re = predict_blup_data(fit, data);
    CHECK(re.u(0, 0) == 0.0);
    CHECK(re.u(0, 1) == 0.0);
    CHECK(re.u(1, 0) != 0.0);
  }
  SUBCASE("Sigma = 0 gives exactly zero BLUPs") {
    fit.sigma.setZero();
    std::vector<LongitudinalObs> data(1);
    data[0].times = Eigen::Vector2d(0, 1);
    data[0].values = Eigen::Vector2d(10.0, 20.0);
    const RandomEffects re = predict_blup_data(fit, data);
    CHECK(re.u(0, 0) == 0.0);
    CHECK(re.u(0, 1) == 0.0);
  }
}

TEST_CASE("predict_blup_newdata uses the frozen fit") {
  const auto train = simulate_lmm(50, {0, 1, 2}, {1.0, 0.2},
                                  (Eigen::Matrix2d() << 0.4, 0.0, 0.0, 0.1).finished(),
                                  0.2, 23);
  const LmmFit fit = fit_lmm_data(train);

  SUBCASE("a new subject identical to a training subject gets the same BLUP") {
    const RandomEffects all = predict_blup_data(fit, train);
    const std::vector<LongitudinalObs> one{train[7]};
    const RandomEffects re = predict_blup_data(fit, one);
    CHECK(re.u(0, 0) == all.u(7, 0));
    CHECK(re.u(0, 1) == all.u(7, 1));
  }
  SUBCASE("empty new data gives empty output") {
    const RandomEffects re = predict_blup_data(fit, {});
    CHECK(re.n() == 0);
  }
  SUBCASE("a trajectory far above the mean has positive intercept BLUP") {
    std::vector<LongitudinalObs> high(1);
    high[0].times = Eigen::Vector3d(0, 1, 2);
    high[0].values = Eigen::Vector3d(8.0, 8.2, 8.4);
    const RandomEffects re = predict_blup_data(fit, high);
    CHECK(re.u(0, 0) > 0.0);
    const Eigen::Vector2d expect = oracle::joint_normal_blup(
        high[0].times, high[0].values, fit.beta, fit.sigma, fit.sigma2);
    CHECK(expect[0] > 0.0);
  }
}

TEST_CASE("BLUPs shrink toward zero relative to per-subject least squares") {
  Eigen::Matrix2d sigma;
  sigma << 0.5, 0.0, 0.0, 0.15;
  const auto data = simulate_lmm(200, {0, 1, 2, 3}, {2.0, 0.4}, sigma, 0.3, 31);
  const LmmFit fit = fit_lmm_data(data, LmmConstraint::Diagonal);
  REQUIRE(fit.converged);
  const RandomEffects re = predict_blup_data(fit, data);

  double blup_sum = 0.0, blup_sq = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& obs = data[i];
    // per-subject OLS intercept deviation from the population intercept
    const double n = static_cast<double>(obs.n());
    const double tm = obs.times.mean();
    const double ym = obs.values.mean();
    const double sxx = (obs.times.array() - tm).square().sum();
    const double sxy = ((obs.times.array() - tm) * (obs.values.array() - ym)).sum();
    const double ols_slope = sxy / sxx;
    const double ols_intercept = ym - ols_slope * tm;
    const double deviation = ols_intercept - fit.beta[0];
    CHECK(std::abs(re.u(static_cast<Eigen::Index>(i), 0)) <=
          std::abs(deviation) + 1e-9);
    (void)n;
    blup_sum += re.u(static_cast<Eigen::Index>(i), 0);
    blup_sq += re.u(static_cast<Eigen::Index>(i), 0) * re.u(static_cast<Eigen::Index>(i), 0);
  }
  // mean of training BLUPs is near zero
  const double mean = blup_sum / static_cast<double>(data.size());
  const double sd = std::sqrt(blup_sq / static_cast<double>(data.size()) - mean * mean);
  CHECK(std::abs(mean) < 0.05 * sd);
}

TEST_CASE("fallback ladder reports its level") {
  const auto data = simulate_lmm(40, {0, 1, 2}, {1.0, 0.1},
                                 (Eigen::Matrix2d() << 0.3, 0.0, 0.0, 0.05).finished(),
                                 0.1, 3);
  const LmmFit fit = fit_lmm_with_fallback(data);
  CHECK(fit.converged);
  CHECK(fit.fallback_level == 0);
  CHECK(fit.to_key_value().find("fallback_level=0") != std::string::npos);
}

TEST_CASE("extract_covariate skips missing values") {
  auto d = make_dataset(
      {make_subject("1", 9.0, true, {}, {0, 1, 2}, {{1.0}, {kMissing}, {3.0}})}, 0, 1);
  const auto slice = make_landmark_slice(d, 3.0, LandmarkMode::Strict);
  const auto obs = extract_covariate(slice, 0);
  REQUIRE(obs.size() == 1);
  CHECK(obs[0].n() == 2);
  CHECK(obs[0].times[1] == 2.0);
}
