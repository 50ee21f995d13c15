#pragma once

#include "dynpred/cox.hpp"
#include "dynpred/lmm.hpp"
#include "dynpred/mfpca.hpp"
#include "dynpred/rsf.hpp"
#include "dynpred/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dynpred {

enum class MethodKind { StaticCox, Locf, MfpcCox, Prc, FunRsf, DynForest };

std::string method_name(MethodKind kind);
MethodKind method_from_name(const std::string& name);

struct MethodSpec {
  MethodKind kind = MethodKind::StaticCox;
  // MFPCA-based methods
  double pve1 = 0.9;
  double pve2 = 0.9;
  std::vector<double> grid;         // alignment grid; empty = visit times as-is
  double align_tolerance = -1.0;    // <= 0: half the smallest grid gap
  // PRC
  std::vector<double> lambda_grid = default_lambda_grid();
  int lambda_folds = 5;
  // forests
  ForestConfig forest = {};
  // LMM-based methods
  bool transform = true;            // skewness transforms on the training slice

  std::string name() const { return method_name(kind); }
};

MethodSpec default_method_spec(MethodKind kind);

// The frozen artifacts of one fitted method; prediction touches nothing else.
struct FittedPipeline {
  MethodKind kind = MethodKind::StaticCox;
  double landmark = 0.0;
  // frozen preprocessing
  bool transformed = false;
  TransformSpec transform;
  std::vector<double> grid;
  double align_tolerance = -1.0;
  // frozen summarizers
  std::vector<int> lmm_covariates;   // kept covariates (PRC)
  std::vector<LmmFit> lmms;          // parallel to lmm_covariates
  std::optional<MfpcaFit> mfpca;
  // frozen survival model
  std::optional<CoxFit> cox;
  std::optional<ForestFit> forest;

  SurvivalPrediction predict(const LandmarkSlice& validation,
                             const std::vector<double>& horizons) const;
};

// Fits one method on a training slice. The seed drives the forest bootstrap
// and the penalty CV folds; everything else is deterministic.
FittedPipeline fit_pipeline(const MethodSpec& spec, const LandmarkSlice& train,
                            std::uint64_t seed = 0);

// Feature assembly shared with tests: baseline covariates as a matrix, and the
// last non-missing value per longitudinal covariate (baseline guaranteed).
Eigen::MatrixXd baseline_matrix(const LandmarkSlice& slice);
Eigen::MatrixXd locf_matrix(const LandmarkSlice& slice);
Eigen::MatrixXd baseline_value_matrix(const LandmarkSlice& slice);  // y(0)

}  // namespace dynpred
