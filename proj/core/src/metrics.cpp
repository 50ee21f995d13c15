#include "dynpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dynpred {

std::string metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::Brier: return "brier";
    case MetricKind::TdAuc: return "tdauc";
    case MetricKind::CIndex: return "cindex";
  }
  return "?";
}

CensoringModel::CensoringModel(const Outcomes& outcomes, double landmark)
    : landmark_(landmark) {
  // KM with roles inverted: censorings are the events of G
  std::vector<int> order(static_cast<std::size_t>(outcomes.n()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return outcomes.times[static_cast<std::size_t>(a)] < outcomes.times[static_cast<std::size_t>(b)];
  });
  std::vector<double> jump_times, jump_values;
  double surv = 1.0;
  int at_risk = outcomes.n();
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = outcomes.times[static_cast<std::size_t>(order[k])];
    int n_cens = 0, tie = 0;
    std::size_t j = k;
    for (; j < order.size(); ++j) {
      const int idx = order[j];
      if (outcomes.times[static_cast<std::size_t>(idx)] != t) break;
      ++tie;
      if (!outcomes.events[static_cast<std::size_t>(idx)]) ++n_cens;
    }
    if (n_cens > 0) {
      surv *= 1.0 - static_cast<double>(n_cens) / at_risk;
      jump_times.push_back(t);
      jump_values.push_back(surv);
    }
    at_risk -= tie;
    k = j;
  }
  km_ = StepFunction(std::move(jump_times), std::move(jump_values), 1.0);
  km_at_landmark_ = km_(landmark);
  if (km_at_landmark_ <= 0.0) km_at_landmark_ = 1.0;  // degenerate; weights undefined later
}

namespace {

void check_sizes(const SurvivalPrediction& pred, const Outcomes& outcomes) {
  if (pred.n() != outcomes.n()) {
    throw ConfigError("prediction and outcomes must cover the same risk set");
  }
}

int horizon_column(const SurvivalPrediction& pred, double horizon) {
  for (std::size_t t = 0; t < pred.horizons.size(); ++t) {
    if (pred.horizons[t] == horizon) return static_cast<int>(t);
  }
  throw ConfigError("horizon not present in the prediction");
}

}  // namespace

MetricResult brier_score(const SurvivalPrediction& pred, const Outcomes& outcomes,
                         double landmark, double horizon) {
  check_sizes(pred, outcomes);
  MetricResult res;
  res.metric = MetricKind::Brier;
  res.landmark = landmark;
  res.horizon = horizon;

  const CensoringModel g(outcomes, landmark);
  const int col = horizon_column(pred, horizon);
  const double g_horizon = g.at(horizon);
  const int n = outcomes.n();

  double sum = 0.0;
  std::size_t contributing = 0;
  for (int i = 0; i < n; ++i) {
    const double t_i = outcomes.times[static_cast<std::size_t>(i)];
    const double s_hat = pred.survival(i, col);
    if (t_i <= horizon && outcomes.events[static_cast<std::size_t>(i)]) {
      const double w = g.at_left(t_i);
      if (w <= 0.0) return res;  // undefined
      sum += s_hat * s_hat / w;
      ++contributing;
    } else if (t_i > horizon) {
      if (g_horizon <= 0.0) return res;  // undefined
      sum += (1.0 - s_hat) * (1.0 - s_hat) / g_horizon;
      ++contributing;
    }
    // censored before the horizon: contributes 0
  }
  res.value = sum / n;
  res.n_effective = contributing;
  res.defined = true;
  return res;
}

MetricResult td_auc(const SurvivalPrediction& pred, const Outcomes& outcomes,
                    double landmark, double horizon) {
  check_sizes(pred, outcomes);
  MetricResult res;
  res.metric = MetricKind::TdAuc;
  res.landmark = landmark;
  res.horizon = horizon;

  const CensoringModel g(outcomes, landmark);
  const int col = horizon_column(pred, horizon);
  const double g_horizon = g.at(horizon);
  const int n = outcomes.n();

  std::vector<int> cases, controls;
  std::vector<double> case_w;
  for (int i = 0; i < n; ++i) {
    const double t_i = outcomes.times[static_cast<std::size_t>(i)];
    if (t_i <= horizon && outcomes.events[static_cast<std::size_t>(i)]) {
      const double w = g.at_left(t_i);
      if (w <= 0.0) return res;
      cases.push_back(i);
      case_w.push_back(1.0 / w);
    } else if (t_i > horizon) {
      controls.push_back(i);
    }
  }
  if (cases.empty() || controls.empty() || g_horizon <= 0.0) return res;
  const double control_w = 1.0 / g_horizon;

  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < cases.size(); ++a) {
    const double risk_case = 1.0 - pred.survival(cases[a], col);
    for (int j : controls) {
      const double risk_control = 1.0 - pred.survival(j, col);
      const double w = case_w[a] * control_w;
      den += w;
      if (risk_case > risk_control) {
        num += w;
      } else if (risk_case == risk_control) {
        num += 0.5 * w;
      }
    }
  }
  res.value = num / den;
  res.n_effective = cases.size() * controls.size();
  res.defined = true;
  return res;
}

MetricResult c_index(const SurvivalPrediction& pred, const Outcomes& outcomes,
                     double landmark, double truncation) {
  check_sizes(pred, outcomes);
  MetricResult res;
  res.metric = MetricKind::CIndex;
  res.landmark = landmark;

  const int n = outcomes.n();
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (int i = 0; i < n; ++i) {
    if (!outcomes.events[static_cast<std::size_t>(i)]) continue;
    const double t_i = outcomes.times[static_cast<std::size_t>(i)];
    if (t_i > truncation) continue;
    for (int j = 0; j < n; ++j) {
      if (outcomes.times[static_cast<std::size_t>(j)] <= t_i) continue;
      ++comparable;
      const double ri = pred.risk_scores[static_cast<std::size_t>(i)];
      const double rj = pred.risk_scores[static_cast<std::size_t>(j)];
      if (ri > rj) {
        concordant += 1.0;
      } else if (ri == rj) {
        concordant += 0.5;
      }
    }
  }
  if (comparable == 0) return res;
  res.value = concordant / static_cast<double>(comparable);
  res.n_effective = comparable;
  res.defined = true;
  return res;
}

}  // namespace dynpred
