#include "fluoro/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "fluoro/error.hpp"
#include "fluoro/quadrature.hpp"

namespace fluoro {
namespace {

constexpr long kMaxAttemptsPerSample = 10'000'000;

// Per-position quantities that do not depend on tau or the filter.
struct LocalAtom {
  double weight;
  double gamma;
  double delta;
  double a2;
  double coherent;
  double incoherent;
};

std::vector<LocalAtom> local_atoms(std::span<const WeightedPosition> set, const TrapParams& trap,
                                   const AtomDriveParams& drive) {
  std::vector<LocalAtom> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto atom = effective_params(set[i].pos, trap, drive);
    const double a = pair_prefactor(atom);
    const auto flux = mean_flux(atom, 1.0, 1.0);
    out[i] = {set[i].weight, atom.gamma(), atom.delta(), a * a, flux.coherent, flux.incoherent};
  }
  return out;
}

double total_weight(std::span<const WeightedPosition> set) {
  double w = 0.0;
  for (const auto& p : set) w += p.weight;
  if (!(w > 0.0)) throw DomainError("position set has no weight");
  return w;
}

void fill_static_moments(const std::vector<LocalAtom>& atoms, double norm, PositionMoments& pm) {
  for (const auto& a : atoms) {
    pm.a2 += a.weight * a.a2;
    pm.coherent += a.weight * a.coherent;
    pm.incoherent += a.weight * a.incoherent;
  }
  pm.a2 /= norm;
  pm.coherent /= norm;
  pm.incoherent /= norm;
}

std::vector<ComplexAmplitude> drift_transmissions(const FilterParams& filter, const DriftModel& drift,
                                                  QuadratureRule& rule) {
  rule = gauss_hermite_normal(drift.nodes);
  std::vector<ComplexAmplitude> t(rule.nodes.size());
  for (std::size_t j = 0; j < t.size(); ++j) {
    FilterParams f = filter;
    f.res_offset = drift.mean_offset + drift.sigma * rule.nodes[j];
    t[j] = laser_transmission(f);
  }
  return t;
}

}  // namespace

void TrapParams::validate() const {
  if (!(depth > 0.0)) throw DomainError("trap depth must be positive");
  if (!(waist > 0.0)) throw DomainError("trap waist must be positive");
  if (!(trap_wavelength > 0.0)) throw DomainError("trap wavelength must be positive");
  if (!(stark_max >= 0.0) || !std::isfinite(stark_max)) throw DomainError("stark_max must be >= 0");
}

double TrapParams::rayleigh_range() const {
  return std::numbers::pi * waist * waist / trap_wavelength;
}

double TrapParams::relative_intensity(const Position& p) const {
  const double zr = rayleigh_range();
  const double q = p.z / zr;
  const double w2 = waist * waist * (1.0 + q * q);
  const double r2 = p.x * p.x + p.y * p.y;
  return (waist * waist / w2) * std::exp(-2.0 * r2 / w2);
}

void ThermalEnsemble::validate() const {
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  if (sample_count < 1) throw DomainError("sample_count must be >= 1");
}

void DriftModel::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("drift sigma must be >= 0");
  if (!std::isfinite(mean_offset)) throw DomainError("drift mean offset must be finite");
  if (nodes < 1) throw DomainError("drift quadrature needs >= 1 node");
}

ThermalSupport thermal_support(const TrapParams& trap, double temperature) {
  trap.validate();
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  if (!(temperature < trap.depth)) {
    throw DomainError("temperature must be below the trap depth for a bound thermal ensemble");
  }
  const double ratio = temperature / trap.depth;
  const double sigma_r = 0.5 * trap.waist * std::sqrt(ratio);
  const double sigma_z = trap.rayleigh_range() * std::sqrt(0.5 * ratio);
  return {std::min(trap.waist / std::sqrt(2.0), 8.0 * sigma_r),
          std::min(trap.rayleigh_range(), 8.0 * sigma_z)};
}

std::vector<Position> sample_positions(const TrapParams& trap, const ThermalEnsemble& ens) {
  ens.validate();
  const ThermalSupport box = thermal_support(trap, ens.temperature);
  const double depth_over_t = trap.depth / ens.temperature;
  std::vector<Position> out(static_cast<std::size_t>(ens.sample_count));
  bool failed = false;

#pragma omp parallel for schedule(dynamic, 64)
  for (long i = 0; i < static_cast<long>(out.size()); ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    std::seed_seq seq{static_cast<std::uint32_t>(ens.seed), static_cast<std::uint32_t>(ens.seed >> 32),
                      static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool accepted = false;
    for (long attempt = 0; attempt < kMaxAttemptsPerSample; ++attempt) {
      Position p{box.radius * (2.0 * unit(rng) - 1.0), box.radius * (2.0 * unit(rng) - 1.0),
                 box.half_length * (2.0 * unit(rng) - 1.0)};
      const double u = unit(rng);
      if (p.x * p.x + p.y * p.y > box.radius * box.radius) continue;
      if (u < std::exp(depth_over_t * (trap.relative_intensity(p) - 1.0))) {
        out[i] = p;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
#pragma omp atomic write
      failed = true;
    }
  }
  if (failed) {
    throw DomainError("rejection sampling exceeded " + std::to_string(kMaxAttemptsPerSample) +
                      " attempts for a thermal position sample");
  }
  return out;
}

PositionSet equal_weights(std::span<const Position> positions) {
  PositionSet set;
  set.reserve(positions.size());
  const double w = positions.empty() ? 0.0 : 1.0 / static_cast<double>(positions.size());
  for (const auto& p : positions) set.push_back({p, w});
  return set;
}

PositionSet thermal_quadrature(const TrapParams& trap, double temperature, int radial_nodes,
                               int axial_nodes) {
  const ThermalSupport box = thermal_support(trap, temperature);
  const double depth_over_t = trap.depth / temperature;
  const auto radial = gauss_legendre(radial_nodes, 0.0, box.radius);
  const auto axial = gauss_legendre(axial_nodes, 0.0, box.half_length);
  PositionSet set;
  set.reserve(radial.nodes.size() * axial.nodes.size());
  double total = 0.0;
  for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
    const double r = radial.nodes[i];
    for (std::size_t j = 0; j < axial.nodes.size(); ++j) {
      const Position p{r, 0.0, axial.nodes[j]};
      const double w = radial.weights[i] * axial.weights[j] * 2.0 * std::numbers::pi * r *
                       std::exp(depth_over_t * (trap.relative_intensity(p) - 1.0));
      set.push_back({p, w});
      total += w;
    }
  }
  for (auto& p : set) p.weight /= total;
  return set;
}

AtomDriveParams effective_params(const Position& pos, const TrapParams& trap,
                                 const AtomDriveParams& drive) {
  const double delta = drive.delta() - trap.stark_max * trap.relative_intensity(pos);
  return AtomDriveParams::from_rabi(drive.gamma(), delta, drive.rabi(), drive.rate_form());
}

double mean_detuning(std::span<const WeightedPosition> set, const TrapParams& trap,
                     const AtomDriveParams& drive) {
  const double norm = total_weight(set);
  double acc = 0.0;
  for (const auto& p : set) acc += p.weight * trap.relative_intensity(p.pos);
  return drive.delta() - trap.stark_max * acc / norm;
}

double stark_max_for_mean_detuning(std::span<const WeightedPosition> set, const TrapParams& trap,
                                   double mot_detuning, double target_delta) {
  const double norm = total_weight(set);
  double acc = 0.0;
  for (const auto& p : set) acc += p.weight * trap.relative_intensity(p.pos);
  const double shift = (mot_detuning - target_delta) / (acc / norm);
  if (!(shift >= 0.0)) {
    throw DomainError("target mean detuning requires a negative AC-Stark shift");
  }
  return shift;
}

PositionMoments position_moments(std::span<const WeightedPosition> set, const TrapParams& trap,
                                 const AtomDriveParams& drive, std::span<const double> taus) {
  const double norm = total_weight(set);
  const auto atoms = local_atoms(set, trap, drive);
  PositionMoments pm;
  pm.taus.assign(taus.begin(), taus.end());
  fill_static_moments(atoms, norm, pm);
  const long nt = static_cast<long>(taus.size());
  pm.a2_econj.assign(taus.size(), 0.0);
  pm.a2_e2.assign(taus.size(), 0.0);

  // Each tau owns its accumulators and sums positions in index order, so the
  // result does not depend on the thread count.
#pragma omp parallel for schedule(static)
  for (long k = 0; k < nt; ++k) {
    const double t = std::abs(taus[k]);
    double re = 0.0, im = 0.0, mod2 = 0.0;
    for (const auto& a : atoms) {
      const double decay = std::exp(-a.gamma * t);
      const double phase = a.delta * t;
      const double wa = a.weight * a.a2;
      re += wa * decay * std::cos(phase);
      im -= wa * decay * std::sin(phase);
      mod2 += wa * decay * decay;
    }
    pm.a2_econj[k] = ComplexAmplitude(re, im) / norm;
    pm.a2_e2[k] = mod2 / norm;
  }
  return pm;
}

DriftMoments drift_moments(const FilterParams& filter, const DriftModel& drift) {
  filter.validate();
  drift.validate();
  QuadratureRule rule;
  const auto ts = drift_transmissions(filter, drift, rule);
  DriftMoments dm;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const double a2 = std::norm(ts[j]);
    dm.t2 += rule.weights[j] * ts[j] * ts[j];
    dm.abs2 += rule.weights[j] * a2;
    dm.abs4 += rule.weights[j] * a2 * a2;
  }
  return dm;
}

EnsembleIntensities combine_moments(const PositionMoments& pm, const DriftMoments& dm, double eta) {
  EnsembleIntensities out;
  out.big_g2.resize(pm.taus.size());
  for (std::size_t k = 0; k < pm.taus.size(); ++k) {
    const double g = pm.a2 * dm.abs4 - 2.0 * std::real(dm.t2 * pm.a2_econj[k]) + pm.a2_e2[k];
    out.big_g2[k] = eta * eta * g;
  }
  out.flux.coherent = eta * dm.abs2 * pm.coherent;
  out.flux.incoherent = eta * pm.incoherent;
  return out;
}

std::vector<double> g2_from_ensemble(const EnsembleIntensities& in, double dark_rate) {
  std::vector<double> g2(in.big_g2.size());
  const double n = in.flux.total();
  if (!(n + dark_rate > 0.0)) throw DomainError("ensemble total flux is zero");
  for (std::size_t k = 0; k < g2.size(); ++k) g2[k] = g2_from_intensities(in.big_g2[k], n, dark_rate);
  return g2;
}

std::vector<double> ensemble_g2(std::span<const double> taus, std::span<const WeightedPosition> set,
                                const TrapParams& trap, const AtomDriveParams& drive,
                                const FilterParams& filter, const DriftModel& drift,
                                const DetectionParams& detection) {
  detection.validate();
  const auto pm = position_moments(set, trap, drive, taus);
  const auto dm = drift_moments(filter, drift);
  return g2_from_ensemble(combine_moments(pm, dm, detection.eta), detection.dark_rate);
}

double ensemble_g2(double tau, const ThermalEnsemble& ensemble, const TrapParams& trap,
                   const AtomDriveParams& drive, const FilterParams& filter, const DriftModel& drift,
                   const DetectionParams& detection) {
  const auto samples = sample_positions(trap, ensemble);
  const auto set = equal_weights(samples);
  const double taus[] = {tau};
  return ensemble_g2(taus, set, trap, drive, filter, drift, detection).front();
}

Flux ensemble_flux(std::span<const WeightedPosition> set, const TrapParams& trap,
                   const AtomDriveParams& drive, const FilterParams& filter, const DriftModel& drift,
                   const DetectionParams& detection) {
  detection.validate();
  const auto pm = position_moments(set, trap, drive, {});
  const auto dm = drift_moments(filter, drift);
  return combine_moments(pm, dm, detection.eta).flux;
}

Flux ensemble_flux(const ThermalEnsemble& ensemble, const TrapParams& trap,
                   const AtomDriveParams& drive, const FilterParams& filter, const DriftModel& drift,
                   const DetectionParams& detection) {
  const auto samples = sample_positions(trap, ensemble);
  return ensemble_flux(equal_weights(samples), trap, drive, filter, drift, detection);
}

EnsembleEstimate ensemble_g2_estimate(double tau, std::span<const Position> samples,
                                      const TrapParams& trap, const AtomDriveParams& drive,
                                      const FilterParams& filter, const DriftModel& drift,
                                      const DetectionParams& det) {
  det.validate();
  const std::size_t n_samples = samples.size();
  if (n_samples < 2) throw DomainError("standard error needs >= 2 samples");
  const auto dm = drift_moments(filter, drift);
  const double eta2 = det.eta * det.eta;
  std::vector<double> gi(n_samples), ni(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto atom = effective_params(samples[i], trap, drive);
    const double a = pair_prefactor(atom);
    const double t = std::abs(tau);
    const ComplexAmplitude e = std::exp(ComplexAmplitude(-atom.gamma() * t, atom.delta() * t));
    gi[i] = eta2 * a * a * (dm.abs4 - 2.0 * std::real(dm.t2 * std::conj(e)) + std::norm(e));
    const auto f = mean_flux(atom, 1.0, det.eta);
    ni[i] = dm.abs2 * f.coherent + f.incoherent;
  }
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  double g_mean = 0.0, n_mean = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    g_mean += gi[i];
    n_mean += ni[i];
  }
  g_mean *= inv_n;
  n_mean *= inv_n;
  double vgg = 0.0, vnn = 0.0, vgn = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double dg = gi[i] - g_mean, dn = ni[i] - n_mean;
    vgg += dg * dg;
    vnn += dn * dn;
    vgn += dg * dn;
  }
  const double scale = 1.0 / (static_cast<double>(n_samples - 1) * static_cast<double>(n_samples));
  vgg *= scale;
  vnn *= scale;
  vgn *= scale;
  const double m = n_mean + det.dark_rate;
  if (!(m > 0.0)) throw DomainError("ensemble total flux is zero");
  const double dg = 1.0 / (m * m);
  const double dn = (-2.0 * n_mean * m - 2.0 * (g_mean - n_mean * n_mean)) / (m * m * m);
  EnsembleEstimate est;
  est.value = g2_from_intensities(g_mean, n_mean, det.dark_rate);
  est.std_error = std::sqrt(std::max(0.0, dg * dg * vgg + dn * dn * vnn + 2.0 * dg * dn * vgn));
  return est;
}

namespace reference {

EnsembleIntensities joint_average(std::span<const double> taus, std::span<const WeightedPosition> set,
                                  const TrapParams& trap, const AtomDriveParams& drive,
                                  const FilterParams& filter, const DriftModel& drift, double eta) {
  const double norm = total_weight(set);
  const auto rule = gauss_hermite_normal(drift.nodes);
  EnsembleIntensities out;
  out.big_g2.assign(taus.size(), 0.0);
  for (const auto& wp : set) {
    const auto atom = effective_params(wp.pos, trap, drive);
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      FilterParams f = filter;
      f.res_offset = drift.mean_offset + drift.sigma * rule.nodes[j];
      const ComplexAmplitude t = laser_transmission(f);
      const double w = wp.weight * rule.weights[j] / norm;
      for (std::size_t k = 0; k < taus.size(); ++k) {
        out.big_g2[k] += w * unnormalized_g2(taus[k], atom, t, eta);
      }
      const auto flux = mean_flux(atom, t, eta);
      out.flux.coherent += w * flux.coherent;
      out.flux.incoherent += w * flux.incoherent;
    }
  }
  return out;
}

PositionMoments position_moments(std::span<const WeightedPosition> set, const TrapParams& trap,
                                 const AtomDriveParams& drive, std::span<const double> taus) {
  const double norm = total_weight(set);
  const auto atoms = local_atoms(set, trap, drive);
  PositionMoments pm;
  pm.taus.assign(taus.begin(), taus.end());
  fill_static_moments(atoms, norm, pm);
  for (double tau : taus) {
    ComplexAmplitude acc = 0.0;
    double mod2 = 0.0;
    for (const auto& a : atoms) {
      const double t = std::abs(tau);
      const ComplexAmplitude e = std::exp(ComplexAmplitude(-a.gamma * t, a.delta * t));
      acc += a.weight * a.a2 * std::conj(e);
      mod2 += a.weight * a.a2 * std::norm(e);
    }
    pm.a2_econj.push_back(acc / norm);
    pm.a2_e2.push_back(mod2 / norm);
  }
  return pm;
}

}  // namespace reference

}  // namespace fluoro
