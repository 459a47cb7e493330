#include "fluoro/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "fluoro/error.hpp"

namespace fluoro {
namespace {

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

double sum_squares(const Eigen::VectorXd& r) { return all_finite(r) ? r.squaredNorm() : INFINITY; }

}  // namespace

Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& scale, double rel_step) {
  Eigen::MatrixXd jac;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(std::abs(x(i)), scale(i));
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const Eigen::VectorXd rp = fn(xp);
    const Eigen::VectorXd rm = fn(xm);
    if (jac.size() == 0) jac.resize(rp.size(), x.size());
    jac.col(i) = (rp - rm) / (xp(i) - xm(i));
  }
  return jac;
}

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& step, int max_iterations,
                          double ftol) {
  const Eigen::Index n = x0.size();
  std::vector<Eigen::VectorXd> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) pts[i + 1](i) += step(i);
  for (Eigen::Index i = 0; i <= n; ++i) vals[i] = f(pts[i]);
  std::vector<Eigen::Index> order(n + 1);
  SimplexResult res;
  for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const auto best = order.front(), worst = order.back(), second = order[n - 1];
    const double spread = std::abs(vals[worst] - vals[best]);
    if (spread <= ftol * (std::abs(vals[best]) + ftol)) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= static_cast<double>(n);
    const Eigen::VectorXd refl = centroid + (centroid - pts[worst]);
    const double fr = f(refl);
    if (fr < vals[best]) {
      const Eigen::VectorXd exp = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = f(exp);
      if (fe < fr) {
        pts[worst] = exp;
        vals[worst] = fe;
      } else {
        pts[worst] = refl;
        vals[worst] = fr;
      }
    } else if (fr < vals[second]) {
      pts[worst] = refl;
      vals[worst] = fr;
    } else {
      const bool outside = fr < vals[worst];
      const Eigen::VectorXd con =
          outside ? Eigen::VectorXd(centroid + 0.5 * (refl - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = f(con);
      if (fc < std::min(fr, vals[worst])) {
        pts[worst] = con;
        vals[worst] = fc;
      } else {
        for (Eigen::Index i = 0; i <= n; ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(std::distance(vals.begin(), it))];
  res.value = *it;
  return res;
}

LsqResult least_squares(const ResidualFn& fn, const Eigen::VectorXd& x0, const Eigen::VectorXd& scale,
                        const LsqOptions& opt) {
  const Eigen::Index n = x0.size();
  if (scale.size() != n || (scale.array() <= 0.0).any()) {
    throw FitError("least_squares: parameter scales must be positive");
  }
  LsqResult res;
  // Work in scaled coordinates z = x / scale.
  auto eval = [&](const Eigen::VectorXd& z) {
    ++res.evaluations;
    return fn(z.cwiseProduct(scale));
  };
  ResidualFn zfn = eval;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  Eigen::VectorXd z = x0.cwiseQuotient(scale);
  Eigen::VectorXd r = eval(z);
  double cost = sum_squares(r);
  if (!std::isfinite(cost)) throw FitError("least_squares: residuals are not finite at the initial guess");

  double lambda = 1e-3;
  bool converged = false;
  std::string why = "iteration limit reached";
  Eigen::MatrixXd jac = numeric_jacobian(zfn, z, ones, opt.fd_step);
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() <= opt.gtol * std::max(1.0, cost)) {
      converged = true;
      why = "gradient below tolerance";
      break;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));
    bool accepted = false;
    for (int inner = 0; inner < 40 && !accepted; ++inner) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * diag;
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd z_new = z + step;
      const Eigen::VectorXd r_new = eval(z_new);
      const double cost_new = sum_squares(r_new);
      if (cost_new < cost) {
        const double reduction = (cost - cost_new) / std::max(cost, 1e-300);
        const double step_rel = step.norm() / (z.norm() + opt.xtol);
        z = z_new;
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (reduction < opt.ftol || step_rel < opt.xtol) {
          converged = true;
          why = reduction < opt.ftol ? "relative reduction below tolerance" : "step below tolerance";
        }
      } else {
        lambda *= 10.0;
        if (step.norm() < opt.xtol * (z.norm() + opt.xtol)) {
          converged = true;
          accepted = true;
          why = "no further decrease at minimal step";
        }
      }
    }
    if (!accepted) {
      why = "damping failed to produce a decrease";
      break;
    }
    if (converged) break;
    jac = numeric_jacobian(zfn, z, ones, opt.fd_step);
  }
  if (converged && !std::isfinite(cost)) converged = false;

  if (!converged && opt.simplex_fallback) {
    auto obj = [&](const Eigen::VectorXd& zz) { return sum_squares(eval(zz)); };
    Eigen::VectorXd step = (0.05 * z.cwiseAbs()).cwiseMax(0.05);
    const auto sim = nelder_mead(obj, z, step, opt.simplex_iterations);
    res.used_fallback = true;
    if (sim.value <= cost) {
      z = sim.x;
      r = eval(z);
      cost = sum_squares(r);
    }
    converged = sim.converged;
    why = sim.converged ? "simplex fallback converged" : "simplex fallback hit its iteration limit";
  }

  jac = numeric_jacobian(zfn, z, ones, opt.fd_step);
  res.x = z.cwiseProduct(scale);
  res.residuals = r;
  res.sum_squares = cost;
  res.jacobian = jac * scale.cwiseInverse().asDiagonal();
  // Covariance from the SVD of J; parameters touching a numerically null
  // direction get infinite variance instead of the pseudo-inverse's zero.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const Eigen::MatrixXd v = svd.matrixV();
  Eigen::MatrixXd cov_z = Eigen::MatrixXd::Zero(n, n);
  std::vector<bool> unidentified(static_cast<std::size_t>(n), false);
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double s = k < sv.size() ? sv(k) : 0.0;
    if (s > 1e-10 * smax && s > 0.0) {
      cov_z += v.col(k) * v.col(k).transpose() / (s * s);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(v(i, k)) > 1e-6) unidentified[static_cast<std::size_t>(i)] = true;
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (unidentified[static_cast<std::size_t>(i)]) cov_z(i, i) = INFINITY;
  }
  res.covariance = scale.asDiagonal() * cov_z * scale.asDiagonal();
  res.converged = converged;
  std::ostringstream msg;
  msg << why << " after " << res.iterations << " iterations, " << res.evaluations
      << " evaluations, sum of squares " << cost;
  res.message = msg.str();
  return res;
}

}  // namespace fluoro
