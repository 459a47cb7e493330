#include "fluoro/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fluoro/error.hpp"
#include "fluoro/optim.hpp"

namespace fluoro {
namespace {

double sigma_from(const Eigen::MatrixXd& cov, Eigen::Index i) {
  const double v = cov(i, i);
  if (!std::isfinite(v)) return INFINITY;
  return std::sqrt(std::max(v, 0.0));
}

Eigen::VectorXd failed_residuals(Eigen::Index m) { return Eigen::VectorXd::Constant(m, INFINITY); }

void fill_common(FitResult& out, const LsqResult& lsq, std::size_t points, std::size_t params) {
  out.residual_norm = std::sqrt(lsq.sum_squares);
  out.chi2 = lsq.sum_squares;
  out.dof = static_cast<int>(points) - static_cast<int>(params);
  out.converged = lsq.converged;
  out.iterations = lsq.iterations;
  out.message = lsq.message;
  if (lsq.used_fallback) out.warnings.push_back("simplex fallback used");
}

void flag_wide(FitResult& out) {
  for (const auto& p : out.parameters) {
    if (!std::isfinite(p.sigma) || p.sigma > std::abs(p.value)) {
      out.warnings.push_back("uncertainty of " + p.name + " exceeds its value");
    }
  }
}

std::size_t total_points(const std::vector<FilteredDataset>& sets) {
  std::size_t n = 0;
  for (const auto& s : sets) n += s.data.tau.size();
  return n;
}

}  // namespace

const FitParameter& FitResult::parameter(const std::string& name) const {
  for (const auto& p : parameters) {
    if (p.name == name) return p;
  }
  throw ConfigError("fit result has no parameter '" + name + "'");
}

const DerivedValue& FitResult::derived_value(const std::string& name) const {
  for (const auto& d : derived) {
    if (d.name == name) return d;
  }
  throw ConfigError("fit result has no derived value '" + name + "'");
}

double BaselineCorrection::apply(double g2) const {
  return mode == BaselineMode::Multiplicative ? level * g2 : g2 + (level - 1.0);
}

void G2Data::validate() const {
  if (tau.empty()) throw DomainError("g2 data is empty");
  if (tau.size() != g2.size() || tau.size() != err.size()) throw DomainError("g2 data: column sizes differ");
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (!std::isfinite(tau[k]) || !std::isfinite(g2[k])) throw DomainError("g2 data must be finite");
    if (!(err[k] > 0.0) || !std::isfinite(err[k])) throw DomainError("g2 data errors must be finite and > 0");
  }
  if (!(baseline.level > 0.0)) throw DomainError("baseline level must be > 0");
}

G2Data g2_data_from_curve(const G2Curve& curve, double max_abs_tau) {
  G2Data d;
  for (std::size_t k = 0; k < curve.tau.size(); ++k) {
    if (std::abs(curve.tau[k]) > max_abs_tau) continue;
    d.tau.push_back(curve.tau[k]);
    d.g2.push_back(curve.g2[k]);
    d.err.push_back(curve.weight_error(k));
  }
  if (d.tau.empty()) throw DomainError("no bins inside the requested delay range");
  return d;
}

// ---- filter loss rate ----

FitResult fit_filter_kappa0(const std::vector<TransmissionPoint>& data, std::optional<double> initial_kappa0) {
  if (data.empty()) throw DomainError("fit_filter_kappa0: no data");
  double kmax = 0.0;
  for (const auto& p : data) {
    if (!(p.kappa_ext >= 0.0) || !std::isfinite(p.transmission)) {
      throw DomainError("fit_filter_kappa0: kappa_ext must be >= 0 and transmission finite");
    }
    kmax = std::max(kmax, p.kappa_ext);
  }
  if (kmax == 0.0) throw DomainError("fit_filter_kappa0: all points at kappa_ext = 0, kappa0 is unidentifiable");

  double k0 = 0.0;
  if (initial_kappa0) {
    k0 = *initial_kappa0;
  } else {
    // Invert the lowest-transmission point assuming it is undercoupled.
    const auto best = std::min_element(data.begin(), data.end(), [](const auto& a, const auto& b) {
      return (a.kappa_ext > 0 ? a.transmission : 2.0) < (b.kappa_ext > 0 ? b.transmission : 2.0);
    });
    const double a = std::sqrt(std::clamp(best->transmission, 0.0, 0.999));
    k0 = best->kappa_ext * (1.0 + a) / (1.0 - a);
  }
  if (!(k0 > 0.0)) throw DomainError("fit_filter_kappa0: initial kappa0 must be > 0");

  const Eigen::Index m = static_cast<Eigen::Index>(data.size());
  ResidualFn fn = [&](const Eigen::VectorXd& x) {
    const double k = x(0);
    if (!(k > 0.0)) return failed_residuals(m);
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& p = data[static_cast<std::size_t>(i)];
      const double t = (k - p.kappa_ext) / (k + p.kappa_ext);
      r(i) = t * t - p.transmission;
    }
    return r;
  };
  const auto lsq = least_squares(fn, Eigen::VectorXd::Constant(1, k0), Eigen::VectorXd::Constant(1, k0));

  FitResult out;
  out.kind = "filter_kappa0";
  fill_common(out, lsq, data.size(), 1);
  // Unweighted: scale the covariance by the residual variance.
  const double s2 = out.dof > 0 ? lsq.sum_squares / out.dof : INFINITY;
  double sigma = sigma_from(lsq.covariance, 0);
  sigma = (std::isfinite(sigma) && std::isfinite(s2)) ? sigma * std::sqrt(s2) : INFINITY;
  if (lsq.sum_squares == 0.0 && std::isfinite(sigma_from(lsq.covariance, 0))) sigma = 0.0;
  out.parameters.push_back({"kappa0", "rad/s", lsq.x(0), sigma, k0});
  return out;
}

// ---- temperature and maximum Stark shift ----

std::vector<double> unfiltered_model(const G2Data& data, const TemperatureFitSetup& setup, double temperature,
                                     double stark_max) {
  TrapParams trap = setup.trap;
  trap.stark_max = stark_max;
  const auto set = thermal_quadrature(trap, temperature, setup.quadrature_nodes, setup.quadrature_nodes);
  FilterParams filter;
  filter.kappa0 = 1.0;
  filter.kappa_ext = 0.0;
  DriftModel drift;
  drift.nodes = 1;
  auto g = ensemble_g2(data.tau, set, trap, setup.drive, filter, drift, setup.detection);
  for (auto& v : g) v = data.baseline.apply(v);
  return g;
}

FitResult fit_temperature_stark(const G2Data& data, const TemperatureFitSetup& setup) {
  data.validate();
  setup.trap.validate();
  setup.detection.validate();
  const double t0 = setup.initial_temperature;
  const double s0 = setup.trap.stark_max;
  if (!(t0 > 0.0) || !(t0 < setup.trap.depth)) throw DomainError("initial temperature must lie in (0, depth)");
  if (!(s0 >= 0.0)) throw DomainError("initial stark_max must be >= 0");

  const Eigen::Index m = static_cast<Eigen::Index>(data.tau.size());
  ResidualFn fn = [&](const Eigen::VectorXd& x) {
    if (!(x(0) > 0.0) || !(x(0) < setup.trap.depth) || !(x(1) >= 0.0)) return failed_residuals(m);
    std::vector<double> model;
    try {
      model = unfiltered_model(data, setup, x(0), x(1));
    } catch (const DomainError&) {
      return failed_residuals(m);
    }
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      r(i) = (model[k] - data.g2[k]) / data.err[k];
    }
    return r;
  };
  Eigen::VectorXd x0(2), scale(2);
  x0 << t0, s0;
  scale << t0, std::max(s0, setup.drive.gamma());
  const auto lsq = least_squares(fn, x0, scale);
  if (!lsq.converged) {
    throw FitError("fit_temperature_stark did not converge: " + lsq.message + "; last T = " +
                   std::to_string(lsq.x(0)) + " K, stark_max = " + std::to_string(lsq.x(1)) + " rad/s");
  }

  FitResult out;
  out.kind = "temperature_stark";
  fill_common(out, lsq, data.tau.size(), 2);
  out.parameters.push_back({"temperature", "K", lsq.x(0), sigma_from(lsq.covariance, 0), t0});
  out.parameters.push_back({"stark_max", "rad/s", lsq.x(1), sigma_from(lsq.covariance, 1), s0});

  // Mean detuning and its uncertainty through the fitted covariance.
  auto mean_at = [&](double t, double s) {
    TrapParams trap = setup.trap;
    trap.stark_max = s;
    const auto set = thermal_quadrature(trap, t, setup.quadrature_nodes, setup.quadrature_nodes);
    return mean_detuning(set, trap, setup.drive);
  };
  const double mean = mean_at(lsq.x(0), lsq.x(1));
  Eigen::Vector2d grad;
  const double ht = 1e-4 * lsq.x(0);
  grad(0) = (mean_at(lsq.x(0) + ht, lsq.x(1)) - mean_at(lsq.x(0) - ht, lsq.x(1))) / (2.0 * ht);
  // Linear in stark_max: d<Delta>/d stark_max = -<I>.
  grad(1) = mean_at(lsq.x(0), 1.0) - setup.drive.delta();
  const Eigen::Matrix2d cov = lsq.covariance;
  const double var = grad.dot(cov * grad);
  out.derived.push_back({"mean_detuning", "rad/s", mean, std::isfinite(var) ? std::sqrt(std::max(var, 0.0)) : INFINITY});
  return out;
}

// ---- filter drift ----

DriftModelEvaluator::DriftModelEvaluator(const std::vector<FilteredDataset>& sets, const DriftFitSetup& setup)
    : sets_(sets), setup_(setup) {
  setup.trap.validate();
  setup.detection.validate();
  const auto positions =
      thermal_quadrature(setup.trap, setup.temperature, setup.quadrature_nodes, setup.quadrature_nodes);
  moments_.reserve(sets.size());
  for (const auto& s : sets) {
    s.data.validate();
    moments_.push_back(position_moments(positions, setup.trap, setup.drive, s.data.tau));
  }
}

std::vector<double> DriftModelEvaluator::model(std::size_t i, double mean_offset, double sigma) const {
  FilterParams filter;
  filter.kappa0 = setup_.kappa0;
  filter.kappa_ext = sets_[i].kappa_ext;
  DriftModel drift;
  drift.mean_offset = mean_offset;
  drift.sigma = std::abs(sigma);
  drift.nodes = setup_.drift_nodes;
  const auto dm = drift_moments(filter, drift);
  auto g = g2_from_ensemble(combine_moments(moments_[i], dm, setup_.detection.eta), setup_.detection.dark_rate);
  for (auto& v : g) v = sets_[i].data.baseline.apply(v);
  return g;
}

FitResult fit_drift(const std::vector<FilteredDataset>& sets, const DriftFitSetup& setup) {
  if (sets.empty()) throw DomainError("fit_drift: no datasets");
  if (!(setup.kappa0 > 0.0)) throw DomainError("fit_drift: kappa0 must be > 0");
  const DriftModelEvaluator eval(sets, setup);
  const std::size_t npts = total_points(sets);
  const Eigen::Index m = static_cast<Eigen::Index>(npts);

  ResidualFn fn = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(m);
    Eigen::Index row = 0;
    try {
      for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto g = eval.model(i, x(0), x(1));
        const auto& d = sets[i].data;
        for (std::size_t k = 0; k < d.tau.size(); ++k) r(row++) = (g[k] - d.g2[k]) / d.err[k];
      }
    } catch (const DomainError&) {
      return failed_residuals(m);
    }
    return r;
  };
  Eigen::VectorXd x0(2), scale(2);
  x0 << setup.initial_mean_offset, setup.initial_sigma;
  scale << setup.kappa0, setup.kappa0;
  const auto lsq = least_squares(fn, x0, scale);

  FitResult out;
  out.kind = "drift";
  fill_common(out, lsq, npts, 2);
  // The model depends on |sigma| only.
  out.parameters.push_back({"mean_offset", "rad/s", lsq.x(0), sigma_from(lsq.covariance, 0), x0(0)});
  out.parameters.push_back({"sigma", "rad/s", std::abs(lsq.x(1)), sigma_from(lsq.covariance, 1), x0(1)});
  if (sets.size() < 2) out.warnings.push_back("single dataset: drift parameters are poorly constrained");
  flag_wide(out);
  if (!out.converged) out.warnings.push_back("not converged: " + out.message);
  return out;
}

// ---- detection efficiency ----

double unit_efficiency_flux(double kappa_ext, const EtaFitSetup& setup, const PositionSet& set) {
  FilterParams filter;
  filter.kappa0 = setup.kappa0;
  filter.kappa_ext = kappa_ext;
  DetectionParams det;
  det.eta = 1.0;
  return ensemble_flux(set, setup.trap, setup.drive, filter, setup.drift, det).total();
}

FitResult fit_eta(const std::vector<RatePoint>& data, const EtaFitSetup& setup) {
  if (data.empty()) throw DomainError("fit_eta: no data");
  bool any_nonzero = false;
  bool weighted = true;
  for (const auto& p : data) {
    if (!std::isfinite(p.rate) || p.rate < 0.0) throw DomainError("fit_eta: rates must be finite and >= 0");
    if (p.rate != 0.0) any_nonzero = true;
    if (!(p.err > 0.0)) weighted = false;
  }
  if (!any_nonzero) throw DomainError("fit_eta: all rates are zero");
  setup.trap.validate();
  const auto set = thermal_quadrature(setup.trap, setup.temperature, setup.quadrature_nodes, setup.quadrature_nodes);

  // Linear in eta: closed-form weighted least squares.
  double sff = 0.0, sfr = 0.0;
  std::vector<double> f(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    f[i] = unit_efficiency_flux(data[i].kappa_ext, setup, set);
    const double w = weighted ? 1.0 / (data[i].err * data[i].err) : 1.0;
    sff += w * f[i] * f[i];
    sfr += w * f[i] * data[i].rate;
  }
  if (!(sff > 0.0)) throw DomainError("fit_eta: model flux is zero at every setting");
  const double eta = sfr / sff;
  double ss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = weighted ? 1.0 / (data[i].err * data[i].err) : 1.0;
    const double r = data[i].rate - eta * f[i];
    ss += w * r * r;
  }

  FitResult out;
  out.kind = "eta";
  out.dof = static_cast<int>(data.size()) - 1;
  out.chi2 = ss;
  out.residual_norm = std::sqrt(ss);
  out.converged = true;
  out.iterations = 1;
  out.message = "closed-form linear least squares";
  double sigma;
  if (weighted) {
    sigma = 1.0 / std::sqrt(sff);
  } else {
    sigma = out.dof > 0 ? std::sqrt(ss / out.dof / sff) : INFINITY;
  }
  out.parameters.push_back({"eta", "1", eta, sigma, eta});
  if (eta > 1.0) out.warnings.push_back("fitted eta exceeds 1");
  return out;
}

}  // namespace fluoro
