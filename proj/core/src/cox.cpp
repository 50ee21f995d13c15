#include "dynpred/cox.hpp"

#include "dynpred/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dynpred {

namespace {

struct SortedData {
  std::vector<int> order;  // indices sorted by time ascending
};

SortedData sort_by_time(const std::vector<double>& times) {
  SortedData s;
  s.order.resize(times.size());
  std::iota(s.order.begin(), s.order.end(), 0);
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](int a, int b) { return times[static_cast<std::size_t>(a)] < times[static_cast<std::size_t>(b)]; });
  return s;
}

// One backward sweep over the sorted sample accumulating risk-set sums.
// Computes the Breslow partial log-likelihood and optionally score /
// information at the given coefficients.
struct PassResult {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
  bool finite = true;
};

PassResult cox_pass(const Eigen::MatrixXd& z, const std::vector<double>& times,
                    const std::vector<bool>& events, const Eigen::VectorXd& coef,
                    const SortedData& sorted, bool want_derivatives) {
  const auto n = z.rows();
  const auto p = z.cols();
  PassResult out;
  if (want_derivatives) {
    out.score = Eigen::VectorXd::Zero(p);
    out.info = Eigen::MatrixXd::Zero(p, p);
  }
  const Eigen::VectorXd eta = z * coef;
  const Eigen::VectorXd w = eta.array().exp();
  if (!eta.allFinite() || !w.allFinite()) {
    out.finite = false;
    return out;
  }

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  Eigen::Index k = n;
  while (k > 0) {
    // extend the risk set with everyone tied at this time
    const double t = times[static_cast<std::size_t>(sorted.order[static_cast<std::size_t>(k - 1)])];
    Eigen::Index tie_begin = k;
    while (tie_begin > 0 &&
           times[static_cast<std::size_t>(sorted.order[static_cast<std::size_t>(tie_begin - 1)])] == t) {
      --tie_begin;
    }
    for (Eigen::Index j = tie_begin; j < k; ++j) {
      const int idx = sorted.order[static_cast<std::size_t>(j)];
      s0 += w[idx];
      if (want_derivatives) {
        s1 += w[idx] * z.row(idx).transpose();
        s2 += w[idx] * (z.row(idx).transpose() * z.row(idx));
      }
    }
    // events at this time against the Breslow risk-set sums
    int d = 0;
    for (Eigen::Index j = tie_begin; j < k; ++j) {
      const int idx = sorted.order[static_cast<std::size_t>(j)];
      if (!events[static_cast<std::size_t>(idx)]) continue;
      ++d;
      out.loglik += eta[idx];
      if (want_derivatives) out.score += z.row(idx).transpose();
    }
    if (d > 0) {
      out.loglik -= d * std::log(s0);
      if (want_derivatives) {
        const Eigen::VectorXd mean = s1 / s0;
        out.score -= d * mean;
        out.info += d * (s2 / s0 - mean * mean.transpose());
      }
    }
    k = tie_begin;
  }
  if (!std::isfinite(out.loglik)) out.finite = false;
  return out;
}

struct Standardized {
  Eigen::MatrixXd z;
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
  std::vector<int> active;  // non-constant columns
};

Standardized standardize(const Eigen::MatrixXd& x) {
  const auto n = x.rows(), p = x.cols();
  Standardized s;
  s.means = x.colwise().mean();
  s.sds = Eigen::VectorXd::Ones(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double var =
        (x.col(j).array() - s.means[j]).square().sum() / std::max<double>(1, n - 1);
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * (1.0 + std::abs(s.means[j]))) {
      s.sds[j] = sd;
      s.active.push_back(static_cast<int>(j));
    }
  }
  s.z.resize(n, static_cast<Eigen::Index>(s.active.size()));
  for (std::size_t a = 0; a < s.active.size(); ++a) {
    const auto j = s.active[a];
    s.z.col(static_cast<Eigen::Index>(a)) = (x.col(j).array() - s.means[j]) / s.sds[j];
  }
  return s;
}

}  // namespace

CoxFit fit_cox(const Eigen::MatrixXd& features, const std::vector<double>& times,
               const std::vector<bool>& events, double penalty) {
  const auto n = features.rows();
  const auto p = features.cols();
  if (n < 2) throw NonEstimableError("Cox fit needs at least 2 subjects");
  if (static_cast<Eigen::Index>(times.size()) != n ||
      static_cast<Eigen::Index>(events.size()) != n) {
    throw ConfigError("features/times/events size mismatch");
  }
  const int n_events = static_cast<int>(std::count(events.begin(), events.end(), true));
  if (n_events == 0) throw NonEstimableError("Cox fit needs at least 1 event");
  if (penalty < 0.0) throw ConfigError("penalty must be >= 0");

  const SortedData sorted = sort_by_time(times);
  const Standardized st = standardize(features);
  const auto pa = st.z.cols();

  Eigen::VectorXd b = Eigen::VectorXd::Zero(pa);
  PassResult cur = cox_pass(st.z, times, events, b, sorted, true);
  double penalized = cur.loglik - 0.5 * penalty * b.squaredNorm();
  bool converged = false;

  constexpr int kMaxIter = 100;
  constexpr double kScoreTol = 1e-7;
  constexpr double kDivergenceBound = 30.0;  // |coef| per sd unit

  for (int iter = 0; iter < kMaxIter && pa > 0; ++iter) {
    Eigen::VectorXd score_pen = cur.score - penalty * b;
    if (score_pen.cwiseAbs().maxCoeff() < kScoreTol) {
      converged = true;
      break;
    }
    Eigen::MatrixXd info_pen = cur.info;
    info_pen.diagonal().array() += penalty;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info_pen);
    Eigen::VectorXd delta = ldlt.solve(score_pen);
    if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
      if (penalty == 0.0) {
        throw MonotoneLikelihoodError("singular information matrix in Cox fit");
      }
      break;
    }
    // step halving until the penalized log-likelihood improves
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 30; ++h) {
      const Eigen::VectorXd b_try = b + step * delta;
      const PassResult trial = cox_pass(st.z, times, events, b_try, sorted, true);
      const double pen_try = trial.finite
                                 ? trial.loglik - 0.5 * penalty * b_try.squaredNorm()
                                 : -std::numeric_limits<double>::infinity();
      if (trial.finite && pen_try >= penalized - 1e-12) {
        b = b_try;
        cur = trial;
        penalized = pen_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (penalty == 0.0 && b.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw MonotoneLikelihoodError(
          "Cox partial likelihood diverges (complete separation?)");
    }
  }
  if (pa == 0) converged = true;  // no estimable coefficients
  if (!converged && pa > 0) {
    const Eigen::VectorXd score_pen = cur.score - penalty * b;
    if (score_pen.cwiseAbs().maxCoeff() < kScoreTol) converged = true;
    if (!converged && penalty == 0.0 && b.cwiseAbs().maxCoeff() > kDivergenceBound / 2) {
      throw MonotoneLikelihoodError(
          "Cox partial likelihood failed to converge; coefficients drifting");
    }
  }
  // a "converged" stationary point miles out on the standardized scale is the
  // flat tail of a monotone likelihood, not an interior maximum
  if (penalty == 0.0 && pa > 0 && b.cwiseAbs().maxCoeff() > kDivergenceBound / 2) {
    throw MonotoneLikelihoodError(
        "Cox partial likelihood diverges (complete separation?)");
  }

  CoxFit fit;
  fit.penalty = penalty;
  fit.converged = converged;
  fit.loglik = cur.loglik;
  fit.feature_means = st.means;
  fit.feature_sds = st.sds;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  for (std::size_t a = 0; a < st.active.size(); ++a) {
    const auto j = st.active[a];
    fit.coefficients[j] = b[static_cast<Eigen::Index>(a)] / st.sds[j];
  }

  // Breslow baseline on the original scale: increments d_t / sum_{risk} e^eta
  // with eta = x * coefficients.
  double offset = 0.0;  // sum_k mean_k * coef_k translates standardized sums
  for (std::size_t a = 0; a < st.active.size(); ++a) {
    const auto j = st.active[a];
    offset += st.means[j] * fit.coefficients[j];
  }
  const Eigen::VectorXd w = (st.z * b).array().exp();
  std::vector<double> jump_times, jump_values;
  double s0 = 0.0;
  double cum = 0.0;
  Eigen::Index k = n;
  std::vector<std::pair<double, double>> rev;  // (time, increment), latest first
  while (k > 0) {
    const double t = times[static_cast<std::size_t>(sorted.order[static_cast<std::size_t>(k - 1)])];
    Eigen::Index tie_begin = k;
    int d = 0;
    while (tie_begin > 0 &&
           times[static_cast<std::size_t>(sorted.order[static_cast<std::size_t>(tie_begin - 1)])] == t) {
      --tie_begin;
    }
    for (Eigen::Index j = tie_begin; j < k; ++j) {
      const int idx = sorted.order[static_cast<std::size_t>(j)];
      s0 += w[idx];
      if (events[static_cast<std::size_t>(idx)]) ++d;
    }
    if (d > 0) rev.emplace_back(t, d * std::exp(-offset) / s0);
    k = tie_begin;
  }
  for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
    cum += it->second;
    jump_times.push_back(it->first);
    jump_values.push_back(cum);
  }
  fit.cumulative_hazard = StepFunction(std::move(jump_times), std::move(jump_values));
  return fit;
}

double cox_partial_loglik(const Eigen::MatrixXd& features,
                          const std::vector<double>& times,
                          const std::vector<bool>& events,
                          const Eigen::VectorXd& coef) {
  const SortedData sorted = sort_by_time(times);
  return cox_pass(features, times, events, coef, sorted, false).loglik;
}

Eigen::VectorXd cox_partial_score(const Eigen::MatrixXd& features,
                                  const std::vector<double>& times,
                                  const std::vector<bool>& events,
                                  const Eigen::VectorXd& coef) {
  const SortedData sorted = sort_by_time(times);
  return cox_pass(features, times, events, coef, sorted, true).score;
}

std::vector<double> default_lambda_grid(int size, double lo, double hi) {
  std::vector<double> grid(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    const double f = size == 1 ? 0.0 : static_cast<double>(i) / (size - 1);
    grid[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, f);
  }
  return grid;
}

RidgeSelection select_ridge_penalty(const Eigen::MatrixXd& features,
                                    const std::vector<double>& times,
                                    const std::vector<bool>& events, int folds,
                                    const std::vector<double>& lambda_grid,
                                    std::uint64_t seed) {
  if (folds < 3) throw ConfigError("penalty selection needs at least 3 folds");
  if (lambda_grid.empty()) throw ConfigError("empty lambda grid");
  const auto n = features.rows();

  // stratified fold assignment on the event indicator
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  {
    Rng rng(seed);
    std::vector<int> ev, cens;
    for (Eigen::Index i = 0; i < n; ++i) {
      (events[static_cast<std::size_t>(i)] ? ev : cens).push_back(static_cast<int>(i));
    }
    rng.shuffle(ev);
    rng.shuffle(cens);
    int next = 0;
    for (int i : ev) fold_of[static_cast<std::size_t>(i)] = next++ % folds;
    for (int i : cens) fold_of[static_cast<std::size_t>(i)] = next++ % folds;
  }

  RidgeSelection sel;
  sel.cv_loglik.assign(lambda_grid.size(), std::numeric_limits<double>::quiet_NaN());
  double best = -std::numeric_limits<double>::infinity();
  int best_idx = -1;

  for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
    double cvl = 0.0;
    bool ok = true;
    for (int f = 0; f < folds && ok; ++f) {
      std::vector<int> train;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (fold_of[static_cast<std::size_t>(i)] != f) train.push_back(static_cast<int>(i));
      }
      Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), features.cols());
      std::vector<double> tt(train.size());
      std::vector<bool> et(train.size());
      for (std::size_t r = 0; r < train.size(); ++r) {
        xt.row(static_cast<Eigen::Index>(r)) = features.row(train[r]);
        tt[r] = times[static_cast<std::size_t>(train[r])];
        et[r] = events[static_cast<std::size_t>(train[r])];
      }
      try {
        const CoxFit fit = fit_cox(xt, tt, et, lambda_grid[g]);
        cvl += cox_partial_loglik(features, times, events, fit.coefficients) -
               cox_partial_loglik(xt, tt, et, fit.coefficients);
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) continue;
    sel.cv_loglik[g] = cvl;
    if (cvl > best) {
      best = cvl;
      best_idx = static_cast<int>(g);
    }
  }
  if (best_idx < 0) {
    sel.all_failed = true;
    sel.lambda = lambda_grid[lambda_grid.size() / 2];
  } else {
    sel.lambda = lambda_grid[static_cast<std::size_t>(best_idx)];
  }
  return sel;
}

SurvivalPrediction predict_conditional_survival(
    const CoxFit& fit, const Eigen::MatrixXd& features_new, double landmark,
    const std::vector<double>& horizons, const std::vector<std::string>& subject_ids) {
  for (double h : horizons) {
    if (h <= landmark) throw ConfigError("all horizons must exceed the landmark");
  }
  SurvivalPrediction pred;
  pred.landmark = landmark;
  pred.horizons = horizons;
  pred.subject_ids = subject_ids;
  const auto n = features_new.rows();
  const Eigen::VectorXd eta = fit.linear_predictor(features_new);
  pred.risk_scores.assign(eta.data(), eta.data() + n);
  pred.survival.resize(n, static_cast<Eigen::Index>(horizons.size()));
  const double h_landmark = fit.cumulative_hazard(landmark);
  for (std::size_t t = 0; t < horizons.size(); ++t) {
    if (horizons[t] > fit.cumulative_hazard.last_time()) pred.extrapolated = true;
    const double dh = fit.cumulative_hazard(horizons[t]) - h_landmark;
    for (Eigen::Index i = 0; i < n; ++i) {
      pred.survival(i, static_cast<Eigen::Index>(t)) =
          dh <= 0.0 ? 1.0 : std::exp(-dh * std::exp(eta[i]));
    }
  }
  return pred;
}

}  // namespace dynpred
