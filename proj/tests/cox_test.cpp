#include "dynpred/cox.hpp"

#include "dynpred/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>

using namespace dynpred;

namespace {

struct CoxSample {
  Eigen::MatrixXd x;
  std::vector<double> times;
  std::vector<bool> events;
};

double cum_at(const std::vector<std::pair<double, double>>& increments, double t) {
  double cum = 0.0;
  for (const auto& [time, inc] : increments) {
    if (time <= t) cum += inc;
  }
  return cum;
}

CoxSample simulate_cox(int n, int p, double effect, double censor_rate,
                       std::uint64_t seed) {
  Rng rng(seed);
  CoxSample s;
  s.x.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) s.x(i, j) = rng.normal();
    const double eta = effect * s.x(i, 0);
    const double t = -std::log(1.0 - rng.uniform()) * std::exp(-eta);
    const double c = censor_rate > 0.0 ? rng.exponential(censor_rate) : 1e300;
    s.times.push_back(std::min(t, c));
    s.events.push_back(t <= c);
  }
  return s;
}

}  // namespace

TEST_CASE("Newton fit matches the 1-D grid-search oracle on a 6-subject toy") {
  const std::vector<double> x{1, 0, 1, 1, 0, 0};
  const std::vector<double> times{1, 2, 3, 4, 5, 6};
  const std::vector<bool> events{true, true, false, true, true, false};
  const auto start = std::chrono::steady_clock::now();
  Eigen::MatrixXd xm(6, 1);
  for (int i = 0; i < 6; ++i) xm(i, 0) = x[static_cast<std::size_t>(i)];
  const CoxFit fit = fit_cox(xm, times, events, 0.0);
  const double beta_star = oracle::grid_search_beta(x, times, events);
  const auto elapsed = std::chrono::duration<double>(
      std::chrono::steady_clock::now() - start);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.coefficients[0] - beta_star) < 1e-3);
  CHECK(elapsed.count() < 1.0);
}

TEST_CASE("huge ridge shrinks coefficients to zero and the baseline to Nelson-Aalen") {
  const CoxSample s = simulate_cox(80, 3, 1.0, 0.3, 7);
  const CoxFit fit = fit_cox(s.x, s.times, s.events, 1e8);
  CHECK(fit.coefficients.cwiseAbs().maxCoeff() < 1e-5);
  const auto na = oracle::naive_nelson_aalen(s.times, s.events);
  REQUIRE(fit.cumulative_hazard.times().size() == na.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < na.size(); ++k) {
    cum += na[k].second;
    CHECK(fit.cumulative_hazard.times()[k] == na[k].first);
    CHECK(fit.cumulative_hazard.values()[k] == doctest::Approx(cum).epsilon(1e-4));
  }
}

TEST_CASE("zero-variance covariate gets coefficient zero") {
  CoxSample s = simulate_cox(30, 2, 0.8, 0.0, 11);
  s.x.col(1).setConstant(3.14);
  for (auto&& e : s.events) e = true;
  const CoxFit fit = fit_cox(s.x, s.times, s.events, 0.0);
  CHECK(fit.coefficients[1] == 0.0);
  CHECK(fit.coefficients[0] != 0.0);
}

TEST_CASE("complete separation raises MonotoneLikelihood for the unpenalized fit") {
  // binary covariate that perfectly orders the outcomes
  Eigen::MatrixXd x(8, 1);
  std::vector<double> times;
  std::vector<bool> events(8, true);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i < 4 ? 1.0 : 0.0;
    times.push_back(i < 4 ? 1.0 + i * 0.1 : 10.0 + i * 0.1);
  }
  CHECK_THROWS_AS(fit_cox(x, times, events, 0.0), MonotoneLikelihoodError);
  // a small ridge rescues it
  const CoxFit fit = fit_cox(x, times, events, 1e-2);
  CHECK(fit.converged);
}

TEST_CASE("analytic score matches central finite differences") {
  const CoxSample s = simulate_cox(40, 3, 0.5, 0.25, 13);
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd b(3);
    for (int j = 0; j < 3; ++j) b[j] = rng.normal() * 0.7;
    const Eigen::VectorXd score = cox_partial_score(s.x, s.times, s.events, b);
    for (int j = 0; j < 3; ++j) {
      const double h = 1e-6 * (1.0 + std::abs(b[j]));
      Eigen::VectorXd bp = b, bm = b;
      bp[j] += h;
      bm[j] -= h;
      const double fd = (cox_partial_loglik(s.x, s.times, s.events, bp) -
                         cox_partial_loglik(s.x, s.times, s.events, bm)) /
                        (2.0 * h);
      CHECK(std::abs(score[j] - fd) <= 1e-5 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("rescaling a feature rescales its coefficient and preserves predictions") {
  const CoxSample s = simulate_cox(60, 2, 0.7, 0.2, 17);
  const CoxFit fit = fit_cox(s.x, s.times, s.events, 0.0);
  Eigen::MatrixXd x2 = s.x;
  x2.col(0) *= 10.0;
  const CoxFit fit2 = fit_cox(x2, s.times, s.events, 0.0);
  CHECK(fit2.coefficients[0] == doctest::Approx(fit.coefficients[0] / 10.0).epsilon(1e-6));
  const std::vector<double> horizons{0.5, 1.0, 2.0};
  const auto p1 = predict_conditional_survival(fit, s.x, 0.1, horizons);
  const auto p2 = predict_conditional_survival(fit2, x2, 0.1, horizons);
  CHECK((p1.survival - p2.survival).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ridge path is monotone in the standardized norm") {
  const CoxSample s = simulate_cox(100, 4, 0.6, 0.2, 19);
  double prev = 1e300;
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const CoxFit fit = fit_cox(s.x, s.times, s.events, lambda);
    const double norm = fit.standardized_coefficients().norm();
    CHECK(norm <= prev + 1e-9);
    prev = norm;
  }
}

TEST_CASE("select_ridge_penalty behaves at the signal extremes") {
  const auto grid = default_lambda_grid(10, 1e-3, 1e3);
  SUBCASE("pure noise selects a top-decile penalty (majority over seeds)") {
    int top = 0;
    for (std::uint64_t seed : {23ULL, 29ULL, 31ULL}) {
      CoxSample s = simulate_cox(120, 5, 0.0, 0.3, seed);
      const RidgeSelection sel =
          select_ridge_penalty(s.x, s.times, s.events, 5, grid, seed);
      if (sel.lambda >= grid[grid.size() - 2]) ++top;
    }
    CHECK(top >= 2);
  }
  SUBCASE("one strong predictor with n = 1000 selects a small penalty") {
    CoxSample s = simulate_cox(1000, 3, 1.2, 0.2, 37);
    const RidgeSelection sel = select_ridge_penalty(s.x, s.times, s.events, 5, grid, 1);
    CHECK(sel.lambda <= grid[grid.size() / 2 - 1]);
  }
  SUBCASE("grid of length 1 returns that value") {
    CoxSample s = simulate_cox(50, 2, 0.5, 0.2, 41);
    const RidgeSelection sel = select_ridge_penalty(s.x, s.times, s.events, 5, {0.37}, 1);
    CHECK(sel.lambda == 0.37);
  }
  SUBCASE("fewer than 3 folds is a configuration error") {
    CoxSample s = simulate_cox(50, 2, 0.5, 0.2, 43);
    CHECK_THROWS_AS(select_ridge_penalty(s.x, s.times, s.events, 2, grid, 1),
                    ConfigError);
  }
}

TEST_CASE("conditional survival prediction") {
  SUBCASE("null model: survival equals the baseline for every subject") {
    CoxSample s = simulate_cox(25, 1, 0.0, 0.0, 47);
    s.x.col(0).setConstant(1.0);  // constant column -> coefficient 0 -> eta = 0
    const CoxFit fit = fit_cox(s.x, s.times, s.events, 0.0);
    const auto pred = predict_conditional_survival(fit, s.x, 0.05, {0.5, 1.0});
    for (int i = 1; i < pred.n(); ++i) {
      CHECK(pred.survival(i, 0) == pred.survival(0, 0));
      CHECK(pred.survival(i, 1) == pred.survival(0, 1));
    }
    const double h0 = fit.cumulative_hazard(1.0) - fit.cumulative_hazard(0.05);
    CHECK(pred.survival(0, 1) == doctest::Approx(std::exp(-h0)).epsilon(1e-12));
  }

  SUBCASE("proportional hazards ordering: curves never cross") {
    const CoxSample s = simulate_cox(50, 2, 0.8, 0.2, 53);
    const CoxFit fit = fit_cox(s.x, s.times, s.events, 0.0);
    const auto pred =
        predict_conditional_survival(fit, s.x, 0.1, {0.3, 0.6, 1.0, 1.5, 2.0});
    for (int a = 0; a < pred.n(); ++a) {
      for (int b = a + 1; b < pred.n(); ++b) {
        const double sign = pred.risk_scores[static_cast<std::size_t>(a)] -
                            pred.risk_scores[static_cast<std::size_t>(b)];
        for (int t = 0; t < 5; ++t) {
          const double diff = pred.survival(a, t) - pred.survival(b, t);
          if (sign > 0) CHECK(diff <= 1e-12);
          if (sign < 0) CHECK(diff >= -1e-12);
        }
      }
    }
  }

  SUBCASE("rows are non-increasing across horizons") {
    const CoxSample s = simulate_cox(50, 2, 0.8, 0.2, 59);
    const CoxFit fit = fit_cox(s.x, s.times, s.events, 0.0);
    const auto pred =
        predict_conditional_survival(fit, s.x, 0.1, {0.3, 0.6, 1.0, 1.5, 2.0});
    for (int i = 0; i < pred.n(); ++i) {
      for (int t = 1; t < 5; ++t) {
        CHECK(pred.survival(i, t) <= pred.survival(i, t - 1) + 1e-15);
      }
    }
  }

  SUBCASE("horizons beyond the last hazard jump extrapolate flat and flag it") {
    const CoxSample s = simulate_cox(20, 1, 0.5, 0.0, 61);
    const CoxFit fit = fit_cox(s.x, s.times, s.events, 0.0);
    const double last = fit.cumulative_hazard.last_time();
    const auto pred = predict_conditional_survival(fit, s.x, 0.01, {last + 1, last + 2});
    CHECK(pred.extrapolated);
    for (int i = 0; i < pred.n(); ++i) {
      CHECK(pred.survival(i, 0) == pred.survival(i, 1));
    }
  }
}

TEST_CASE("Breslow baseline matches the hand-worked toy to 1e-10") {
  // 4 subjects, one event per time, known risk-set sums
  Eigen::MatrixXd x(4, 1);
  x << 1, 0, 1, 0;
  const std::vector<double> times{1, 2, 3, 4};
  const std::vector<bool> events{true, true, true, false};
  const CoxFit fit = fit_cox(x, times, events, 0.5);  // any coefficients work here
  const auto expected = oracle::naive_breslow(x, times, events, fit.coefficients);
  REQUIRE(fit.cumulative_hazard.times().size() == expected.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    cum += expected[k].second;
    CHECK(fit.cumulative_hazard.times()[k] == expected[k].first);
    CHECK(std::abs(fit.cumulative_hazard.values()[k] - cum) < 1e-10);
  }

  // Eq.-style conditional survival from the same hand-worked quantities
  const auto pred = predict_conditional_survival(fit, x, 1.5, {2.5, 3.5});
  for (int i = 0; i < 4; ++i) {
    const double eta = x(i, 0) * fit.coefficients[0];
    const double h15 = cum_at(expected, 1.5), h25 = cum_at(expected, 2.5),
                 h35 = cum_at(expected, 3.5);
    CHECK(std::abs(pred.survival(i, 0) - std::exp(-(h25 - h15) * std::exp(eta))) < 1e-10);
    CHECK(std::abs(pred.survival(i, 1) - std::exp(-(h35 - h15) * std::exp(eta))) < 1e-10);
  }
}
