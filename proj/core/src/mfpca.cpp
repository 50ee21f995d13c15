#include "dynpred/mfpca.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace dynpred {

Eigen::VectorXd trapezoid_weights(const std::vector<double>& grid) {
  const auto g = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(g);
  if (g == 1) {
    w[0] = 1.0;
    return w;
  }
  for (Eigen::Index k = 0; k + 1 < g; ++k) {
    const double h = grid[static_cast<std::size_t>(k + 1)] - grid[static_cast<std::size_t>(k)];
    w[k] += h / 2.0;
    w[k + 1] += h / 2.0;
  }
  return w;
}

namespace {

// subject's values mapped onto grid indices (exact match; slices are aligned)
struct GriddedSubject {
  std::vector<int> points;
  std::vector<double> values;
};

std::vector<GriddedSubject> map_to_grid(const LandmarkSlice& slice,
                                        const std::vector<double>& grid,
                                        int covariate_index) {
  std::vector<GriddedSubject> out;
  out.reserve(slice.subjects.size());
  for (const auto& s : slice.subjects) {
    GriddedSubject gs;
    for (int i = 0; i < s.n_visits(); ++i) {
      const double v = s.longitudinal(i, covariate_index);
      if (is_missing(v)) continue;
      const double t = s.visit_times[static_cast<std::size_t>(i)];
      const auto it = std::lower_bound(grid.begin(), grid.end(), t);
      if (it == grid.end() || *it != t) continue;  // point dropped from grid
      gs.points.push_back(static_cast<int>(it - grid.begin()));
      gs.values.push_back(v);
    }
    out.push_back(std::move(gs));
  }
  return out;
}

// Local quadratic smooth of the off-diagonal covariance surface, evaluated on
// the diagonal. Symmetry is built in through the rotated coordinates
// x1 = (u + v), x2 = (u - v)^2 around each target (t_j, t_j).
Eigen::VectorXd smooth_diagonal(const std::vector<double>& grid,
                                const Eigen::MatrixXd& cov,
                                const Eigen::MatrixXd& pair_counts) {
  const auto g = static_cast<Eigen::Index>(grid.size());
  const double range = grid.back() - grid.front();
  const double h = std::max(range / 2.0, 1e-8);
  Eigen::VectorXd smoothed(g);
  for (Eigen::Index j = 0; j < g; ++j) {
    Eigen::Matrix4d xtx = Eigen::Matrix4d::Zero();
    Eigen::Vector4d xty = Eigen::Vector4d::Zero();
    for (Eigen::Index a = 0; a < g; ++a) {
      for (Eigen::Index b = 0; b < g; ++b) {
        if (a == b || pair_counts(a, b) < 2) continue;
        const double u = grid[static_cast<std::size_t>(a)] - grid[static_cast<std::size_t>(j)];
        const double v = grid[static_cast<std::size_t>(b)] - grid[static_cast<std::size_t>(j)];
        const double w = std::exp(-(u * u + v * v) / (2.0 * h * h));
        Eigen::Vector4d x(1.0, u + v, (u + v) * (u + v), (u - v) * (u - v));
        xtx += w * x * x.transpose();
        xty += w * x * cov(a, b);
      }
    }
    xtx.diagonal().array() += 1e-10;
    smoothed[j] = (xtx.ldlt().solve(xty))[0];
  }
  return smoothed;
}

void flip_sign_convention(Eigen::Ref<Eigen::VectorXd> f, const Eigen::VectorXd& w) {
  const double integral = w.dot(f);
  if (integral < -1e-8 || (std::abs(integral) <= 1e-8 && f[0] < 0.0)) f = -f;
}

}  // namespace

UfpcaFit fit_ufpca(const LandmarkSlice& slice, int covariate_index, double pve1) {
  if (covariate_index < 0 || covariate_index >= slice.n_longitudinal()) {
    throw ConfigError("covariate index out of range");
  }
  if (pve1 <= 0.0 || pve1 > 1.0) throw ConfigError("pve must be in (0, 1]");

  // candidate grid: union of observed visit times
  std::map<double, int> counts;
  for (const auto& s : slice.subjects) {
    for (int i = 0; i < s.n_visits(); ++i) {
      if (!is_missing(s.longitudinal(i, covariate_index))) {
        ++counts[s.visit_times[static_cast<std::size_t>(i)]];
      }
    }
  }
  UfpcaFit fit;
  for (const auto& [t, c] : counts) {
    if (c >= 2) {
      fit.grid.push_back(t);
    } else {
      ++fit.dropped_grid_points;
    }
  }
  const auto g = static_cast<Eigen::Index>(fit.grid.size());
  if (g < 2) {
    throw NonEstimableError("univariate FPCA needs at least 2 usable grid points");
  }

  const auto data = map_to_grid(slice, fit.grid, covariate_index);

  // pointwise means
  fit.mean = Eigen::VectorXd::Zero(g);
  Eigen::VectorXd n_at = Eigen::VectorXd::Zero(g);
  for (const auto& gs : data) {
    for (std::size_t k = 0; k < gs.points.size(); ++k) {
      fit.mean[gs.points[k]] += gs.values[k];
      n_at[gs.points[k]] += 1.0;
    }
  }
  fit.mean.array() /= n_at.array();

  // pairwise-complete covariances
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(g, g);
  Eigen::MatrixXd pair_n = Eigen::MatrixXd::Zero(g, g);
  for (const auto& gs : data) {
    for (std::size_t a = 0; a < gs.points.size(); ++a) {
      const double ra = gs.values[a] - fit.mean[gs.points[a]];
      for (std::size_t b = 0; b < gs.points.size(); ++b) {
        const double rb = gs.values[b] - fit.mean[gs.points[b]];
        cross(gs.points[a], gs.points[b]) += ra * rb;
        pair_n(gs.points[a], gs.points[b]) += 1.0;
      }
    }
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(g, g);
  for (Eigen::Index a = 0; a < g; ++a) {
    for (Eigen::Index b = 0; b < g; ++b) {
      if (pair_n(a, b) >= 2) cov(a, b) = cross(a, b) / (pair_n(a, b) - 1.0);
    }
  }

  // replace the diagonal by the smoothed surface to strip the noise nugget
  const Eigen::VectorXd smoothed = smooth_diagonal(fit.grid, cov, pair_n);
  double nugget = 0.0;
  for (Eigen::Index j = 0; j < g; ++j) nugget += cov(j, j) - smoothed[j];
  fit.noise_var = std::max(nugget / static_cast<double>(g), 0.0);
  for (Eigen::Index j = 0; j < g; ++j) cov(j, j) = smoothed[j];
  cov = ((cov + cov.transpose()) / 2.0).eval();

  // eigendecomposition orthonormal under trapezoid quadrature
  const Eigen::VectorXd w = trapezoid_weights(fit.grid);
  const Eigen::VectorXd sqrt_w = w.array().sqrt();
  Eigen::MatrixXd m = sqrt_w.asDiagonal() * cov * sqrt_w.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw NonEstimableError("covariance eigendecomposition failed");

  std::vector<std::pair<double, Eigen::Index>> order;
  for (Eigen::Index k = 0; k < g; ++k) order.emplace_back(eig.eigenvalues()[k], k);
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  const double lambda_max = std::max(order.front().first, 0.0);
  const double floor_val = lambda_max * 1e-10;
  double total = 0.0;
  Eigen::Index rank = 0;
  for (const auto& [lam, idx] : order) {
    if (lam > floor_val && lam > 0.0) {
      total += lam;
      ++rank;
    }
  }
  if (rank == 0 || total <= 0.0) {
    throw NonEstimableError("covariance has no positive eigenvalues");
  }
  Eigen::Index k_keep = 0;
  double cum = 0.0;
  for (Eigen::Index k = 0; k < rank; ++k) {
    cum += order[static_cast<std::size_t>(k)].first;
    k_keep = k + 1;
    if (cum / total >= pve1 - 1e-12) break;
  }
  fit.eigenvalues.resize(k_keep);
  fit.eigenfunctions.resize(g, k_keep);
  fit.pve_achieved = cum / total;
  for (Eigen::Index k = 0; k < k_keep; ++k) {
    fit.eigenvalues[k] = order[static_cast<std::size_t>(k)].first;
    fit.eigenfunctions.col(k) =
        eig.eigenvectors().col(order[static_cast<std::size_t>(k)].second).cwiseQuotient(sqrt_w);
    flip_sign_convention(fit.eigenfunctions.col(k), w);
  }
  return fit;
}

Eigen::MatrixXd pace_scores(const UfpcaFit& fit, const LandmarkSlice& slice,
                            int covariate_index) {
  const auto data = map_to_grid(slice, fit.grid, covariate_index);
  const auto k = static_cast<Eigen::Index>(fit.n_components());
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data.size()), k);
  const double noise =
      std::max(fit.noise_var, 1e-10 * (fit.eigenvalues.size() ? fit.eigenvalues[0] : 1.0));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& gs = data[i];
    const auto m = static_cast<Eigen::Index>(gs.points.size());
    if (m == 0) continue;  // prior mean
    Eigen::MatrixXd phi(m, k);
    Eigen::VectorXd resid(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      phi.row(r) = fit.eigenfunctions.row(gs.points[static_cast<std::size_t>(r)]);
      resid[r] = gs.values[static_cast<std::size_t>(r)] - fit.mean[gs.points[static_cast<std::size_t>(r)]];
    }
    Eigen::MatrixXd v = phi * fit.eigenvalues.asDiagonal() * phi.transpose();
    v.diagonal().array() += noise;
    scores.row(static_cast<Eigen::Index>(i)) =
        (fit.eigenvalues.asDiagonal() * phi.transpose() * v.ldlt().solve(resid)).transpose();
  }
  return scores;
}

MfpcaFit fit_mfpca(const LandmarkSlice& slice, double pve1, double pve2) {
  if (pve2 <= 0.0 || pve2 > 1.0) throw ConfigError("pve must be in (0, 1]");
  MfpcaFit fit;
  for (int q = 0; q < slice.n_longitudinal(); ++q) {
    try {
      UfpcaFit u = fit_ufpca(slice, q, pve1);
      fit.covariate_indices.push_back(q);
      fit.univariate.push_back(std::move(u));
    } catch (const NonEstimableError&) {
      ++fit.dropped_covariates;
    }
  }
  if (fit.univariate.empty()) {
    throw NonEstimableError("univariate FPCA failed for every covariate");
  }

  const auto n = static_cast<Eigen::Index>(slice.n());
  Eigen::Index total_k = 0;
  for (const auto& u : fit.univariate) total_k += u.n_components();

  Eigen::MatrixXd stacked(n, total_k);
  Eigen::Index col = 0;
  for (std::size_t q = 0; q < fit.univariate.size(); ++q) {
    const Eigen::MatrixXd s = pace_scores(fit.univariate[q], slice, fit.covariate_indices[q]);
    stacked.middleCols(col, fit.univariate[q].n_components()) = s;
    col += fit.univariate[q].n_components();
  }
  fit.score_center = stacked.colwise().mean();
  stacked.rowwise() -= fit.score_center.transpose();

  const Eigen::MatrixXd s =
      stacked.transpose() * stacked / std::max<double>(1.0, static_cast<double>(n - 1));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) throw NonEstimableError("score eigendecomposition failed");

  std::vector<std::pair<double, Eigen::Index>> order;
  for (Eigen::Index k = 0; k < total_k; ++k) order.emplace_back(eig.eigenvalues()[k], k);
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  double total = 0.0;
  for (auto& [nu, idx] : order) {
    if (nu < 0.0) nu = 0.0;
    total += nu;
  }
  if (total <= 0.0) throw NonEstimableError("score covariance is identically zero");
  Eigen::Index k_keep = 0;
  double cum = 0.0;
  for (Eigen::Index k = 0; k < total_k; ++k) {
    cum += order[static_cast<std::size_t>(k)].first;
    k_keep = k + 1;
    if (cum / total >= pve2 - 1e-12) break;
  }
  fit.pve_achieved = cum / total;
  fit.eigenvalues.resize(total_k);
  fit.combination.resize(total_k, k_keep);
  for (Eigen::Index k = 0; k < total_k; ++k) {
    fit.eigenvalues[k] = order[static_cast<std::size_t>(k)].first;
  }
  for (Eigen::Index k = 0; k < k_keep; ++k) {
    fit.combination.col(k) = eig.eigenvectors().col(order[static_cast<std::size_t>(k)].second);
  }

  // multivariate eigenfunctions per covariate, then the sign convention
  fit.eigenfunctions.resize(fit.univariate.size());
  for (Eigen::Index k = 0; k < k_keep; ++k) {
    double integral_sum = 0.0;
    double first_value = 0.0;
    Eigen::Index offset = 0;
    for (std::size_t q = 0; q < fit.univariate.size(); ++q) {
      const auto& u = fit.univariate[q];
      const Eigen::VectorXd block = fit.combination.col(k).segment(offset, u.n_components());
      const Eigen::VectorXd psi = u.eigenfunctions * block;
      integral_sum += trapezoid_weights(u.grid).dot(psi);
      if (q == 0) first_value = psi[0];
      offset += u.n_components();
    }
    if (integral_sum < -1e-8 || (std::abs(integral_sum) <= 1e-8 && first_value < 0.0)) {
      fit.combination.col(k) = -fit.combination.col(k);
    }
  }
  for (std::size_t q = 0; q < fit.univariate.size(); ++q) {
    const auto& u = fit.univariate[q];
    Eigen::Index offset = 0;
    for (std::size_t r = 0; r < q; ++r) offset += fit.univariate[r].n_components();
    fit.eigenfunctions[q] =
        u.eigenfunctions * fit.combination.middleRows(offset, u.n_components());
  }

  fit.scores = stacked * fit.combination;
  return fit;
}

Eigen::MatrixXd project_mfpca(const MfpcaFit& fit, const LandmarkSlice& newslice) {
  const auto n = static_cast<Eigen::Index>(newslice.n());
  Eigen::Index total_k = 0;
  for (const auto& u : fit.univariate) total_k += u.n_components();
  Eigen::MatrixXd stacked(n, total_k);
  Eigen::Index col = 0;
  for (std::size_t q = 0; q < fit.univariate.size(); ++q) {
    stacked.middleCols(col, fit.univariate[q].n_components()) =
        pace_scores(fit.univariate[q], newslice, fit.covariate_indices[q]);
    col += fit.univariate[q].n_components();
  }
  stacked.rowwise() -= fit.score_center.transpose();
  return stacked * fit.combination;
}

}  // namespace dynpred
