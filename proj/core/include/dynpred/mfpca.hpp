#pragma once

#include "dynpred/types.hpp"

#include <Eigen/Dense>

#include <vector>

namespace dynpred {

// Trapezoid quadrature weights for a (possibly non-uniform) grid.
Eigen::VectorXd trapezoid_weights(const std::vector<double>& grid);

// Univariate FPCA on grid-aligned data: pointwise means, pairwise-complete
// covariances with the diagonal nugget removed by a local quadratic smooth,
// and an eigendecomposition orthonormal under trapezoid quadrature.
struct UfpcaFit {
  std::vector<double> grid;        // usable grid points (>= 2 observations)
  Eigen::VectorXd mean;            // on grid
  Eigen::MatrixXd eigenfunctions;  // grid.size() x K, quadrature-orthonormal
  Eigen::VectorXd eigenvalues;     // descending, positive
  double noise_var = 0.0;
  double pve_achieved = 0.0;
  int dropped_grid_points = 0;

  int n_components() const { return static_cast<int>(eigenvalues.size()); }
};

UfpcaFit fit_ufpca(const LandmarkSlice& slice, int covariate_index, double pve1);

// PACE conditional-expectation scores, valid for any observed subset of the
// grid (including a single point); zero rows for subjects with no data.
Eigen::MatrixXd pace_scores(const UfpcaFit& fit, const LandmarkSlice& slice,
                            int covariate_index);

// Multivariate FPCA: univariate PACE scores stacked and rotated by the
// eigenvectors of their covariance.
struct MfpcaFit {
  std::vector<int> covariate_indices;       // kept covariates (fit order)
  std::vector<UfpcaFit> univariate;         // parallel to covariate_indices
  Eigen::VectorXd score_center;             // training means of stacked scores
  Eigen::MatrixXd combination;              // sum(K_q) x K
  Eigen::VectorXd eigenvalues;              // nu, descending
  Eigen::MatrixXd scores;                   // n x K training scores
  std::vector<Eigen::MatrixXd> eigenfunctions;  // per covariate: grid x K (psi)
  double pve_achieved = 0.0;
  int dropped_covariates = 0;

  int n_components() const { return static_cast<int>(combination.cols()); }
};

MfpcaFit fit_mfpca(const LandmarkSlice& slice, double pve1, double pve2);

// Scores for new subjects from the frozen training basis.
Eigen::MatrixXd project_mfpca(const MfpcaFit& fit, const LandmarkSlice& newslice);

}  // namespace dynpred
