#pragma once

// Levenberg-Marquardt least squares with central-difference Jacobians and a
// Nelder-Mead fallback. Deterministic for fixed inputs.

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace fluoro {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LsqOptions {
  int max_iterations = 200;
  double ftol = 1e-15;   // relative reduction of the sum of squares
  double xtol = 1e-13;   // relative step size in scaled parameters
  double gtol = 1e-14;   // max |J^T r| in scaled parameters
  double fd_step = 1e-6; // relative central-difference step
  bool simplex_fallback = true;
  int simplex_iterations = 4000;
};

struct LsqResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;    // d residual / d x at the optimum
  Eigen::MatrixXd covariance;  // pinv(J^T J), unscaled
  double sum_squares = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool used_fallback = false;
  std::string message;
};

// scale: typical magnitude of each parameter (entries must be > 0).
LsqResult least_squares(const ResidualFn& fn, const Eigen::VectorXd& x0, const Eigen::VectorXd& scale,
                        const LsqOptions& options = {});

// Central differences with step h_i = rel_step * max(|x_i|, scale_i).
Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& scale, double rel_step);

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& step, int max_iterations,
                          double ftol = 1e-14);

}  // namespace fluoro
