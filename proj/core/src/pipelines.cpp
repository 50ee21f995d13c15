#include "dynpred/pipelines.hpp"

#include "dynpred/dataset.hpp"
#include "dynpred/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dynpred {

std::string method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::StaticCox: return "static_cox";
    case MethodKind::Locf: return "locf_landmarking";
    case MethodKind::MfpcCox: return "mfpccox";
    case MethodKind::Prc: return "prc";
    case MethodKind::FunRsf: return "funrsf";
    case MethodKind::DynForest: return "dynforest";
  }
  return "?";
}

MethodKind method_from_name(const std::string& name) {
  if (name == "static_cox") return MethodKind::StaticCox;
  if (name == "locf_landmarking" || name == "locf") return MethodKind::Locf;
  if (name == "mfpccox") return MethodKind::MfpcCox;
  if (name == "prc") return MethodKind::Prc;
  if (name == "funrsf") return MethodKind::FunRsf;
  if (name == "dynforest") return MethodKind::DynForest;
  throw ConfigError("unknown method name: " + name);
}

MethodSpec default_method_spec(MethodKind kind) {
  MethodSpec spec;
  spec.kind = kind;
  switch (kind) {
    case MethodKind::FunRsf:
      spec.forest.n_trees = 1000;
      spec.forest.node_size_ladder = {15};
      spec.forest.min_node_events = 0;
      break;
    case MethodKind::DynForest:
      spec.forest.n_trees = 200;
      spec.forest.node_size_ladder = {15, 30, 50};
      spec.forest.min_node_events = 5;
      break;
    default:
      break;
  }
  return spec;
}

Eigen::MatrixXd baseline_matrix(const LandmarkSlice& slice) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(slice.n()),
                    static_cast<Eigen::Index>(slice.n_baseline()));
  for (int i = 0; i < slice.n(); ++i) {
    for (int j = 0; j < slice.n_baseline(); ++j) {
      x(i, j) = slice.subjects[static_cast<std::size_t>(i)].baseline[static_cast<std::size_t>(j)];
    }
  }
  return x;
}

Eigen::MatrixXd baseline_value_matrix(const LandmarkSlice& slice) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(slice.n()),
                    static_cast<Eigen::Index>(slice.n_longitudinal()));
  for (int i = 0; i < slice.n(); ++i) {
    y.row(i) = slice.subjects[static_cast<std::size_t>(i)].longitudinal.row(0);
  }
  return y;
}

Eigen::MatrixXd locf_matrix(const LandmarkSlice& slice) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(slice.n()),
                    static_cast<Eigen::Index>(slice.n_longitudinal()));
  for (int i = 0; i < slice.n(); ++i) {
    const auto& s = slice.subjects[static_cast<std::size_t>(i)];
    for (int q = 0; q < slice.n_longitudinal(); ++q) {
      double carried = kMissing;
      for (int v = 0; v < s.n_visits(); ++v) {
        const double val = s.longitudinal(v, q);
        if (!is_missing(val)) carried = val;
      }
      y(i, q) = carried;  // baseline value exists, so never missing
    }
  }
  return y;
}

namespace {

Eigen::MatrixXd hstack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

void extract_outcomes(const LandmarkSlice& slice, std::vector<double>& times,
                      std::vector<bool>& events) {
  times.clear();
  events.clear();
  for (const auto& s : slice.subjects) {
    times.push_back(s.event_time);
    events.push_back(s.event);
  }
}

CoxFit fit_cox_stabilized(const Eigen::MatrixXd& x, const std::vector<double>& t,
                          const std::vector<bool>& e) {
  try {
    return fit_cox(x, t, e, 0.0);
  } catch (const MonotoneLikelihoodError&) {
    CoxFit fit = fit_cox(x, t, e, 1e-6);
    fit.stabilized = true;
    return fit;
  }
}

Eigen::MatrixXd prc_features(const FittedPipeline& pipe, const LandmarkSlice& slice) {
  const auto n = static_cast<Eigen::Index>(slice.n());
  Eigen::MatrixXd u(n, static_cast<Eigen::Index>(2 * pipe.lmms.size()));
  for (std::size_t k = 0; k < pipe.lmms.size(); ++k) {
    const RandomEffects re =
        predict_blup_newdata(pipe.lmms[k], slice, pipe.lmm_covariates[k]);
    u.col(static_cast<Eigen::Index>(2 * k)) = re.u.col(0);
    u.col(static_cast<Eigen::Index>(2 * k + 1)) = re.u.col(1);
  }
  return hstack(baseline_matrix(slice), u);
}

LandmarkSlice aligned_or_passthrough(const LandmarkSlice& slice,
                                     const std::vector<double>& grid,
                                     double tolerance) {
  if (grid.empty()) return slice;
  return align_to_grid(slice, grid, tolerance).slice;
}

}  // namespace

FittedPipeline fit_pipeline(const MethodSpec& spec, const LandmarkSlice& train,
                            std::uint64_t seed) {
  FittedPipeline pipe;
  pipe.kind = spec.kind;
  pipe.landmark = train.landmark;
  pipe.grid = spec.grid;
  pipe.align_tolerance = spec.align_tolerance;

  std::vector<double> times;
  std::vector<bool> events;
  extract_outcomes(train, times, events);

  switch (spec.kind) {
    case MethodKind::StaticCox: {
      pipe.cox = fit_cox(hstack(baseline_matrix(train), baseline_value_matrix(train)),
                         times, events, 0.0);
      break;
    }
    case MethodKind::Locf: {
      pipe.cox = fit_cox(hstack(baseline_matrix(train), locf_matrix(train)), times,
                         events, 0.0);
      break;
    }
    case MethodKind::MfpcCox: {
      const LandmarkSlice aligned =
          aligned_or_passthrough(train, spec.grid, spec.align_tolerance);
      try {
        pipe.mfpca = fit_mfpca(aligned, spec.pve1, spec.pve2);
      } catch (const NonEstimableError& e) {
        throw FitFailedError(std::string("mfpccox: ") + e.what());
      }
      pipe.cox = fit_cox_stabilized(
          hstack(baseline_matrix(train), pipe.mfpca->scores), times, events);
      break;
    }
    case MethodKind::Prc: {
      LandmarkSlice work = train;
      if (spec.transform) {
        pipe.transform = fit_transform_spec(train);
        pipe.transformed = true;
        work = apply_transform(train, pipe.transform);
      }
      const int q = work.n_longitudinal();
      int failed = 0;
      for (int j = 0; j < q; ++j) {
        try {
          LmmFit fit = fit_lmm_with_fallback(extract_covariate(work, j));
          if (!fit.converged) {
            ++failed;
            continue;
          }
          pipe.lmm_covariates.push_back(j);
          pipe.lmms.push_back(std::move(fit));
        } catch (const NonEstimableError&) {
          ++failed;
        }
      }
      if (2 * failed >= q && q > 0) {
        throw FitFailedError("prc: " + std::to_string(failed) + " of " +
                             std::to_string(q) + " mixed models non-estimable");
      }
      const Eigen::MatrixXd x = prc_features(pipe, work);
      const RidgeSelection sel =
          select_ridge_penalty(x, times, events, spec.lambda_folds, spec.lambda_grid,
                               derive_seed(seed, 0xc0ffee));
      pipe.cox = fit_cox(x, times, events, sel.lambda);
      break;
    }
    case MethodKind::FunRsf: {
      const LandmarkSlice aligned =
          aligned_or_passthrough(train, spec.grid, spec.align_tolerance);
      try {
        pipe.mfpca = fit_mfpca(aligned, spec.pve1, spec.pve2);
      } catch (const NonEstimableError& e) {
        throw FitFailedError(std::string("funrsf: ") + e.what());
      }
      ForestConfig cfg = spec.forest;
      cfg.seed = derive_seed(seed, 0xf03e57);
      pipe.forest = fit_rsf(hstack(baseline_matrix(train), pipe.mfpca->scores),
                            times, events, cfg);
      break;
    }
    case MethodKind::DynForest: {
      LandmarkSlice work = train;
      if (spec.transform) {
        pipe.transform = fit_transform_spec(train);
        pipe.transformed = true;
        work = apply_transform(train, pipe.transform);
      }
      ForestConfig cfg = spec.forest;
      cfg.seed = derive_seed(seed, 0xf03e57);
      pipe.forest = fit_dynforest(work, baseline_matrix(work), cfg);
      if (pipe.forest->trees.empty()) {
        throw FitFailedError("dynforest: no trees could be grown");
      }
      break;
    }
  }
  return pipe;
}

SurvivalPrediction FittedPipeline::predict(const LandmarkSlice& validation,
                                           const std::vector<double>& horizons) const {
  std::vector<double> times;
  std::vector<bool> events;
  const auto ids = validation.risk_set_ids();

  switch (kind) {
    case MethodKind::StaticCox:
      return predict_conditional_survival(
          *cox, hstack(baseline_matrix(validation), baseline_value_matrix(validation)),
          landmark, horizons, ids);
    case MethodKind::Locf:
      return predict_conditional_survival(
          *cox, hstack(baseline_matrix(validation), locf_matrix(validation)),
          landmark, horizons, ids);
    case MethodKind::MfpcCox: {
      const LandmarkSlice aligned =
          aligned_or_passthrough(validation, grid, align_tolerance);
      const Eigen::MatrixXd scores = project_mfpca(*mfpca, aligned);
      return predict_conditional_survival(
          *cox, hstack(baseline_matrix(validation), scores), landmark, horizons, ids);
    }
    case MethodKind::Prc: {
      const LandmarkSlice work =
          transformed ? apply_transform(validation, transform) : validation;
      return predict_conditional_survival(*cox, prc_features(*this, work), landmark,
                                          horizons, ids);
    }
    case MethodKind::FunRsf: {
      const LandmarkSlice aligned =
          aligned_or_passthrough(validation, grid, align_tolerance);
      const Eigen::MatrixXd scores = project_mfpca(*mfpca, aligned);
      return predict_forest_survival(
          *forest, hstack(baseline_matrix(validation), scores), landmark, horizons,
          ids);
    }
    case MethodKind::DynForest: {
      const LandmarkSlice work =
          transformed ? apply_transform(validation, transform) : validation;
      return predict_forest_survival(*forest, work, landmark, horizons);
    }
  }
  throw ConfigError("unreachable pipeline kind");
}

}  // namespace dynpred
