#include "dynpred/rsf.hpp"

#include "dynpred/csv.hpp"
#include "dynpred/parallel.hpp"
#include "dynpred/rng.hpp"
#include "dynpred/step_function.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

namespace dynpred {

namespace {

constexpr int kExactSplitDistinctLimit = 50;

// ---------------------------------------------------------------------------
// Log-rank machinery over a node's member rows
// ---------------------------------------------------------------------------

struct NodeOutcomes {
  // members sorted by time ascending (indices into the member arrays)
  std::vector<int> order;
  const std::vector<double>* times = nullptr;   // per member
  const std::vector<bool>* events = nullptr;    // per member
};

double node_logrank(const NodeOutcomes& node, const std::vector<bool>& in_left) {
  const auto& order = node.order;
  const auto& times = *node.times;
  const auto& events = *node.events;
  int remaining = static_cast<int>(order.size());
  int left_remaining = 0;
  for (int i : order) {
    if (in_left[static_cast<std::size_t>(i)]) ++left_remaining;
  }
  double o_minus_e = 0.0;
  double variance = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = times[static_cast<std::size_t>(order[k])];
    int d = 0, d_left = 0, tie_n = 0, tie_left = 0;
    std::size_t j = k;
    for (; j < order.size() && times[static_cast<std::size_t>(order[j])] == t; ++j) {
      const int m = order[j];
      ++tie_n;
      const bool l = in_left[static_cast<std::size_t>(m)];
      if (l) ++tie_left;
      if (events[static_cast<std::size_t>(m)]) {
        ++d;
        if (l) ++d_left;
      }
    }
    if (d > 0 && remaining > 1) {
      const double n = remaining;
      const double nl = left_remaining;
      o_minus_e += d_left - d * nl / n;
      variance += d * (nl / n) * (1.0 - nl / n) * (n - d) / (n - 1.0);
    }
    remaining -= tie_n;
    left_remaining -= tie_left;
    k = j;
  }
  if (variance <= 0.0) return 0.0;
  return o_minus_e * o_minus_e / variance;
}

std::vector<double> candidate_thresholds(std::vector<double> values, int quantiles) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> out;
  if (values.size() < 2) return out;
  if (static_cast<int>(values.size()) <= kExactSplitDistinctLimit) {
    out.reserve(values.size() - 1);
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      out.push_back((values[i] + values[i + 1]) / 2.0);
    }
    return out;
  }
  for (int q = 1; q <= quantiles; ++q) {
    const double p = static_cast<double>(q) / (quantiles + 1);
    const auto idx = static_cast<std::size_t>(p * (values.size() - 1));
    out.push_back(values[idx]);
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Candidate feature expansion (plain columns vs node-local BLUP pairs)
// ---------------------------------------------------------------------------

struct SplitColumn {
  std::vector<double> values;  // one per member
  int blup_component = 0;
  std::shared_ptr<LmmFit> lmm;  // set for longitudinal candidates
};

struct CandidateSet {
  std::vector<SplitColumn> columns;
  bool lmm_failed = false;
};

struct BuildInputs {
  const Eigen::MatrixXd* features = nullptr;              // plain candidates
  const std::vector<std::vector<LongitudinalObs>>* longitudinal = nullptr;
  const std::vector<double>* times = nullptr;              // per original row
  const std::vector<bool>* events = nullptr;
  int n_plain = 0;
  int n_longitudinal = 0;

  int total_features() const { return n_plain + n_longitudinal; }
};

CandidateSet expand_candidate(const BuildInputs& in, int feature,
                              const std::vector<int>& members) {
  CandidateSet set;
  if (feature < in.n_plain) {
    SplitColumn col;
    col.values.reserve(members.size());
    for (int m : members) col.values.push_back((*in.features)(m, feature));
    set.columns.push_back(std::move(col));
    return set;
  }
  const int q = feature - in.n_plain;
  std::vector<LongitudinalObs> node_obs;
  node_obs.reserve(members.size());
  for (int m : members) node_obs.push_back((*in.longitudinal)[static_cast<std::size_t>(q)][static_cast<std::size_t>(m)]);
  LmmFit fit;
  try {
    fit = fit_lmm_with_fallback(node_obs);
  } catch (const NonEstimableError&) {
    set.lmm_failed = true;
    return set;
  }
  if (!fit.converged) {
    set.lmm_failed = true;
    return set;
  }
  const RandomEffects re = predict_blup_data(fit, node_obs);
  auto shared = std::make_shared<LmmFit>(std::move(fit));
  for (int c = 0; c < 2; ++c) {
    SplitColumn col;
    col.blup_component = c;
    col.lmm = shared;
    col.values.reserve(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      col.values.push_back(re.u(static_cast<Eigen::Index>(i), c));
    }
    set.columns.push_back(std::move(col));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Tree construction
// ---------------------------------------------------------------------------

struct TreeBuildContext {
  const BuildInputs* in = nullptr;
  const ForestConfig* config = nullptr;
  const std::vector<double>* event_times = nullptr;  // global unique event times
  int tree_index = 0;
  SurvivalTree* tree = nullptr;
  Rng* rng = nullptr;
};

void make_terminal(const TreeBuildContext& ctx, int node_id,
                   const std::vector<int>& members) {
  auto& node = ctx.tree->nodes[static_cast<std::size_t>(node_id)];
  // Nelson-Aalen over the node's bootstrap members
  std::vector<int> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return (*ctx.in->times)[static_cast<std::size_t>(members[static_cast<std::size_t>(a)])] <
           (*ctx.in->times)[static_cast<std::size_t>(members[static_cast<std::size_t>(b)])];
  });
  int remaining = static_cast<int>(members.size());
  std::size_t k = 0;
  while (k < order.size()) {
    const double t =
        (*ctx.in->times)[static_cast<std::size_t>(members[static_cast<std::size_t>(order[k])])];
    int d = 0, tie = 0;
    std::size_t j = k;
    for (; j < order.size(); ++j) {
      const int m = members[static_cast<std::size_t>(order[j])];
      if ((*ctx.in->times)[static_cast<std::size_t>(m)] != t) break;
      ++tie;
      if ((*ctx.in->events)[static_cast<std::size_t>(m)]) ++d;
    }
    if (d > 0) {
      const auto it =
          std::lower_bound(ctx.event_times->begin(), ctx.event_times->end(), t);
      node.chf.emplace_back(static_cast<int>(it - ctx.event_times->begin()),
                            static_cast<double>(d) / remaining);
    }
    remaining -= tie;
    k = j;
  }
}

void build_node(const TreeBuildContext& ctx, int node_id, std::vector<int> members,
                int ladder_level) {
  const ForestConfig& cfg = *ctx.config;
  const BuildInputs& in = *ctx.in;

  // outcomes of this node's members, sorted once
  std::vector<double> m_times(members.size());
  std::vector<bool> m_events(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    m_times[i] = (*in.times)[static_cast<std::size_t>(members[i])];
    m_events[i] = (*in.events)[static_cast<std::size_t>(members[i])];
  }
  NodeOutcomes node_out;
  node_out.times = &m_times;
  node_out.events = &m_events;
  node_out.order.resize(members.size());
  std::iota(node_out.order.begin(), node_out.order.end(), 0);
  std::sort(node_out.order.begin(), node_out.order.end(),
            [&](int a, int b) { return m_times[static_cast<std::size_t>(a)] < m_times[static_cast<std::size_t>(b)]; });

  const int mtry = cfg.mtry > 0
                       ? std::min(cfg.mtry, in.total_features())
                       : static_cast<int>(std::ceil(std::sqrt(in.total_features())));

  while (true) {
    const int min_subjects = cfg.node_size_ladder[static_cast<std::size_t>(ladder_level)];

    const auto cand_features =
        ctx.rng->sample_without_replacement(in.total_features(), mtry);

    double best_stat = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    int best_component = 0;
    std::shared_ptr<LmmFit> best_lmm;
    std::vector<bool> best_left;
    int n_evaluable = 0;
    bool any_lmm_candidate = false;

    for (int feature : cand_features) {
      if (feature >= in.n_plain) any_lmm_candidate = true;
      const CandidateSet set = expand_candidate(in, feature, members);
      if (set.columns.empty()) continue;
      ++n_evaluable;
      for (const auto& col : set.columns) {
        const auto thresholds =
            candidate_thresholds(col.values, cfg.max_split_candidates_per_feature);
        for (double thr : thresholds) {
          std::vector<bool> in_left(members.size());
          int n_left = 0, e_left = 0, n_right = 0, e_right = 0;
          for (std::size_t i = 0; i < members.size(); ++i) {
            const bool l = col.values[i] <= thr;
            in_left[i] = l;
            if (l) {
              ++n_left;
              if (m_events[i]) ++e_left;
            } else {
              ++n_right;
              if (m_events[i]) ++e_right;
            }
          }
          const bool valid = n_left >= min_subjects && n_right >= min_subjects &&
                             e_left >= cfg.min_node_events &&
                             e_right >= cfg.min_node_events;
          double stat = 0.0;
          if (valid) stat = node_logrank(node_out, in_left);
          if (cfg.record_split_stats) {
            SplitRecord rec;
            rec.tree = ctx.tree_index;
            rec.node = node_id;
            rec.feature = feature < in.n_plain ? feature : feature - in.n_plain;
            rec.longitudinal_q = feature < in.n_plain ? -1 : feature - in.n_plain;
            rec.blup_component = col.blup_component;
            rec.threshold = thr;
            rec.statistic = stat;
            rec.valid = valid;
            ctx.tree->split_log.push_back(rec);
          }
          if (valid && stat > best_stat) {
            best_stat = stat;
            best_feature = feature;
            best_threshold = thr;
            best_component = col.blup_component;
            best_lmm = col.lmm;
            best_left = in_left;
          }
        }
      }
    }

    if (best_feature >= 0) {
      auto& node = ctx.tree->nodes[static_cast<std::size_t>(node_id)];
      if (best_feature < in.n_plain) {
        node.feature = best_feature;
      } else {
        node.feature = best_feature;
        node.longitudinal_q = best_feature - in.n_plain;
        node.blup_component = best_component;
        node.lmm = *best_lmm;
      }
      node.threshold = best_threshold;
      if (cfg.record_split_stats) {
        for (auto it = ctx.tree->split_log.rbegin(); it != ctx.tree->split_log.rend();
             ++it) {
          if (it->node != node_id) break;
          const int rec_feat = it->longitudinal_q >= 0 ? it->longitudinal_q + in.n_plain
                                                       : it->feature;
          if (rec_feat == best_feature && it->threshold == best_threshold &&
              it->blup_component == best_component && it->statistic == best_stat) {
            it->chosen = true;
            break;
          }
        }
      }
      std::vector<int> left_members, right_members;
      for (std::size_t i = 0; i < members.size(); ++i) {
        (best_left[i] ? left_members : right_members).push_back(members[i]);
      }
      node.left = static_cast<int>(ctx.tree->nodes.size());
      ctx.tree->nodes.emplace_back();
      node.right = static_cast<int>(ctx.tree->nodes.size());
      ctx.tree->nodes.emplace_back();
      const int left_id = ctx.tree->nodes[static_cast<std::size_t>(node_id)].left;
      const int right_id = ctx.tree->nodes[static_cast<std::size_t>(node_id)].right;
      build_node(ctx, left_id, std::move(left_members), ladder_level);
      build_node(ctx, right_id, std::move(right_members), ladder_level);
      return;
    }

    // No split. If every candidate collapsed because its node-local mixed model
    // failed, advance the node-size ladder and try again with a fresh draw.
    const bool all_failed = any_lmm_candidate && n_evaluable == 0;
    if (all_failed &&
        ladder_level + 1 < static_cast<int>(cfg.node_size_ladder.size())) {
      ++ladder_level;
      continue;
    }
    make_terminal(ctx, node_id, members);
    return;
  }
}

void validate_config(const ForestConfig& cfg, int n_features) {
  if (cfg.n_trees < 1) throw ConfigError("forest needs at least 1 tree");
  if (cfg.node_size_ladder.empty()) throw ConfigError("empty node-size ladder");
  for (std::size_t i = 0; i < cfg.node_size_ladder.size(); ++i) {
    if (cfg.node_size_ladder[i] < 1) throw ConfigError("node size must be >= 1");
    if (i > 0 && cfg.node_size_ladder[i] < cfg.node_size_ladder[i - 1]) {
      throw ConfigError("node-size ladder must be non-decreasing");
    }
  }
  if (cfg.min_node_events < 0) throw ConfigError("min_node_events must be >= 0");
  if (cfg.mtry < 0 || cfg.mtry > n_features) {
    throw ConfigError("mtry must be in [1, #features] (0 = auto)");
  }
  if (cfg.max_split_candidates_per_feature < 1) {
    throw ConfigError("max_split_candidates_per_feature must be >= 1");
  }
}

ForestFit fit_forest(const BuildInputs& in, const ForestConfig& config) {
  validate_config(config, in.total_features());
  const auto n = static_cast<int>(in.times->size());
  if (n < 2) throw NonEstimableError("forest needs at least 2 subjects");

  ForestFit fit;
  fit.config = config;
  fit.n_features = in.n_plain;
  fit.n_longitudinal = in.n_longitudinal;
  fit.dynamic = in.n_longitudinal > 0;
  std::set<double> ev;
  for (int i = 0; i < n; ++i) {
    if ((*in.events)[static_cast<std::size_t>(i)]) ev.insert((*in.times)[static_cast<std::size_t>(i)]);
  }
  fit.event_times.assign(ev.begin(), ev.end());
  fit.trees.resize(static_cast<std::size_t>(config.n_trees));

  parallel_for(static_cast<std::size_t>(config.n_trees), config.n_threads,
               [&](std::size_t b) {
                 Rng rng(derive_seed(config.seed, b));
                 SurvivalTree& tree = fit.trees[b];
                 std::vector<int> members(static_cast<std::size_t>(n));
                 std::vector<bool> drawn(static_cast<std::size_t>(n), false);
                 for (int i = 0; i < n; ++i) {
                   const int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
                   members[static_cast<std::size_t>(i)] = pick;
                   drawn[static_cast<std::size_t>(pick)] = true;
                 }
                 for (int i = 0; i < n; ++i) {
                   if (!drawn[static_cast<std::size_t>(i)]) tree.oob_ids.push_back(i);
                 }
                 tree.nodes.emplace_back();
                 bool any_event = false;
                 for (int m : members) {
                   if ((*in.events)[static_cast<std::size_t>(m)]) {
                     any_event = true;
                     break;
                   }
                 }
                 TreeBuildContext ctx;
                 ctx.in = &in;
                 ctx.config = &config;
                 ctx.event_times = &fit.event_times;
                 ctx.tree_index = static_cast<int>(b);
                 ctx.tree = &tree;
                 ctx.rng = &rng;
                 if (!any_event) {
                   // no events in the bootstrap: single root with CHF == 0
                   return;
                 }
                 build_node(ctx, 0, std::move(members), 0);
               });
  return fit;
}

}  // namespace

double logrank_statistic(const std::vector<double>& times,
                         const std::vector<bool>& events,
                         const std::vector<bool>& in_left) {
  NodeOutcomes node;
  node.times = &times;
  node.events = &events;
  node.order.resize(times.size());
  std::iota(node.order.begin(), node.order.end(), 0);
  std::sort(node.order.begin(), node.order.end(),
            [&](int a, int b) { return times[static_cast<std::size_t>(a)] < times[static_cast<std::size_t>(b)]; });
  return node_logrank(node, in_left);
}

ForestFit fit_rsf(const Eigen::MatrixXd& features, const std::vector<double>& times,
                  const std::vector<bool>& events, const ForestConfig& config) {
  if (static_cast<Eigen::Index>(times.size()) != features.rows() ||
      times.size() != events.size()) {
    throw ConfigError("features/times/events size mismatch");
  }
  if (!features.allFinite()) {
    throw ConfigError("forest features must be fully numeric and non-missing");
  }
  BuildInputs in;
  in.features = &features;
  in.times = &times;
  in.events = &events;
  in.n_plain = static_cast<int>(features.cols());
  in.n_longitudinal = 0;
  return fit_forest(in, config);
}

ForestFit fit_dynforest(const LandmarkSlice& slice,
                        const Eigen::MatrixXd& baseline_features,
                        const ForestConfig& config) {
  if (baseline_features.rows() != static_cast<Eigen::Index>(slice.n())) {
    throw ConfigError("baseline feature rows must match the slice");
  }
  std::vector<double> times;
  std::vector<bool> events;
  times.reserve(slice.subjects.size());
  for (const auto& s : slice.subjects) {
    times.push_back(s.event_time);
    events.push_back(s.event);
  }
  std::vector<std::vector<LongitudinalObs>> longobs;
  longobs.reserve(static_cast<std::size_t>(slice.n_longitudinal()));
  for (int q = 0; q < slice.n_longitudinal(); ++q) {
    longobs.push_back(extract_covariate(slice, q));
  }
  BuildInputs in;
  in.features = &baseline_features;
  in.longitudinal = &longobs;
  in.times = &times;
  in.events = &events;
  in.n_plain = static_cast<int>(baseline_features.cols());
  in.n_longitudinal = slice.n_longitudinal();
  return fit_forest(in, config);
}

namespace {

// single-subject BLUP against a frozen node fit
Eigen::Vector2d blup_single(const LmmFit& fit, const LongitudinalObs& obs) {
  if (obs.n() == 0 || fit.sigma.isZero(0.0)) return Eigen::Vector2d::Zero();
  const auto m = obs.n();
  Eigen::MatrixXd z(m, 2);
  z.col(0).setOnes();
  z.col(1) = obs.times;
  Eigen::MatrixXd v = z * fit.sigma * z.transpose();
  v.diagonal().array() += std::max(fit.sigma2, 1e-12);
  return fit.sigma * z.transpose() * v.ldlt().solve(obs.values - z * fit.beta);
}

SurvivalPrediction predict_forest_impl(
    const ForestFit& fit, const Eigen::MatrixXd& plain_features,
    const std::vector<std::vector<LongitudinalObs>>* longobs, double landmark,
    const std::vector<double>& horizons, std::vector<std::string> ids) {
  for (double h : horizons) {
    if (h <= landmark) throw ConfigError("all horizons must exceed the landmark");
  }
  const auto n = plain_features.rows();
  const auto n_times = fit.event_times.size();
  SurvivalPrediction pred;
  pred.landmark = landmark;
  pred.horizons = horizons;
  pred.subject_ids = std::move(ids);
  pred.survival.resize(n, static_cast<Eigen::Index>(horizons.size()));
  pred.risk_scores.assign(static_cast<std::size_t>(n), 0.0);
  const double last_event = n_times ? fit.event_times.back() : 0.0;
  for (double h : horizons) {
    if (h > last_event) pred.extrapolated = true;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> increments(n_times, 0.0);
    for (const auto& tree : fit.trees) {
      if (tree.nodes.empty()) continue;  // zero-event bootstrap: CHF == 0
      int node_id = 0;
      while (!tree.nodes[static_cast<std::size_t>(node_id)].terminal()) {
        const auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
        double value;
        if (node.longitudinal_q < 0) {
          value = plain_features(i, node.feature);
        } else {
          const auto& obs = (*longobs)[static_cast<std::size_t>(node.longitudinal_q)][static_cast<std::size_t>(i)];
          value = blup_single(node.lmm, obs)[node.blup_component];
        }
        node_id = value <= node.threshold ? node.left : node.right;
      }
      for (const auto& [idx, inc] : tree.nodes[static_cast<std::size_t>(node_id)].chf) {
        increments[static_cast<std::size_t>(idx)] += inc;
      }
    }
    const double inv_b = 1.0 / static_cast<double>(fit.trees.size());
    double cum = 0.0;
    std::vector<double> chf(n_times);
    for (std::size_t k = 0; k < n_times; ++k) {
      cum += increments[k] * inv_b;
      chf[k] = cum;
    }
    const StepFunction ensemble(std::vector<double>(fit.event_times), std::move(chf));
    for (std::size_t t = 0; t < horizons.size(); ++t) {
      pred.survival(i, static_cast<Eigen::Index>(t)) = std::exp(-ensemble(horizons[t]));
    }
    pred.risk_scores[static_cast<std::size_t>(i)] =
        ensemble(*std::max_element(horizons.begin(), horizons.end()));
  }
  return pred;
}

}  // namespace

SurvivalPrediction predict_forest_survival(const ForestFit& fit,
                                           const Eigen::MatrixXd& features_new,
                                           double landmark,
                                           const std::vector<double>& horizons,
                                           const std::vector<std::string>& subject_ids) {
  if (fit.dynamic) {
    throw ConfigError("dynamic forest prediction needs a landmark slice");
  }
  return predict_forest_impl(fit, features_new, nullptr, landmark, horizons,
                             subject_ids);
}

SurvivalPrediction predict_forest_survival(const ForestFit& fit,
                                           const LandmarkSlice& newslice,
                                           double landmark,
                                           const std::vector<double>& horizons) {
  Eigen::MatrixXd baseline(static_cast<Eigen::Index>(newslice.n()),
                           static_cast<Eigen::Index>(newslice.n_baseline()));
  for (int i = 0; i < newslice.n(); ++i) {
    for (int j = 0; j < newslice.n_baseline(); ++j) {
      baseline(i, j) = newslice.subjects[static_cast<std::size_t>(i)].baseline[static_cast<std::size_t>(j)];
    }
  }
  std::vector<std::vector<LongitudinalObs>> longobs;
  for (int q = 0; q < newslice.n_longitudinal(); ++q) {
    longobs.push_back(extract_covariate(newslice, q));
  }
  return predict_forest_impl(fit, baseline, &longobs, landmark, horizons,
                             newslice.risk_set_ids());
}

std::string dump_split_log(const ForestFit& fit) {
  std::ostringstream os;
  os << "tree,node,feature,longitudinal,blup_component,threshold,statistic,valid,chosen\n";
  for (const auto& tree : fit.trees) {
    for (const auto& rec : tree.split_log) {
      os << rec.tree << ',' << rec.node << ',' << rec.feature << ','
         << rec.longitudinal_q << ',' << rec.blup_component << ','
         << format_double(rec.threshold) << ',' << format_double(rec.statistic)
         << ',' << (rec.valid ? 1 : 0) << ',' << (rec.chosen ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

}  // namespace dynpred
