#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>

namespace dynpred {

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double grad_norm = 0.0;      // max-norm of the final gradient
  int iterations = 0;
  bool converged = false;      // relative objective change < rel_tol
};

struct BfgsOptions {
  int max_iterations = 500;
  double rel_tol = 1e-8;       // on the objective change
  double grad_tol = 0.0;       // also require max |grad| below this when > 0
  double grad_step = 1e-5;     // central-difference step scale
  double lower = -15.0;        // box constraints applied componentwise
  double upper = 15.0;
};

// Minimizes a smooth objective with BFGS, central-difference gradients and
// Armijo backtracking. Dimensions here are tiny (<= 4), so numeric gradients
// cost next to nothing.
inline BfgsResult bfgs_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                                Eigen::VectorXd x0, const BfgsOptions& opt = {}) {
  const auto n = x0.size();
  auto clamp = [&](Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      v[i] = std::min(opt.upper, std::max(opt.lower, v[i]));
    }
    return v;
  };
  auto gradient = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = opt.grad_step * (1.0 + std::abs(x[i]));
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
  };

  BfgsResult res;
  res.x = clamp(std::move(x0));
  res.value = f(res.x);
  Eigen::VectorXd g = gradient(res.x);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    res.iterations = iter + 1;
    Eigen::VectorXd dir = -h_inv * g;
    if (dir.dot(g) >= 0.0) dir = -g;  // reset on loss of descent direction

    double step = 1.0;
    double new_value = res.value;
    Eigen::VectorXd x_new = res.x;
    const double slope = g.dot(dir);
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = clamp(res.x + step * dir);
      new_value = f(x_new);
      if (std::isfinite(new_value) && new_value <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Eigen::VectorXd g_new = gradient(x_new);
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const Eigen::MatrixXd i_mat = Eigen::MatrixXd::Identity(n, n);
      const Eigen::MatrixXd v = i_mat - (s * y.transpose()) / sy;
      h_inv = v * h_inv * v.transpose() + (s * s.transpose()) / sy;
    }
    const double prev_value = res.value;
    res.x = x_new;
    res.value = new_value;
    g = g_new;
    if (std::abs(prev_value - new_value) < opt.rel_tol * (std::abs(prev_value) + 1.0)) {
      res.converged = true;
      if (opt.grad_tol <= 0.0 || g.cwiseAbs().maxCoeff() < opt.grad_tol) break;
    }
  }
  res.grad_norm = g.cwiseAbs().maxCoeff();
  return res;
}

}  // namespace dynpred
