#include "fluoro/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fluoro/error.hpp"

namespace fluoro {
namespace {

void require_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw DomainError("gamma must be positive and finite, got " + std::to_string(gamma));
  }
}

void require_saturation(double s) {
  if (!(s >= 0.0) || !std::isfinite(s)) {
    throw DomainError("saturation must be non-negative and finite, got " + std::to_string(s));
  }
}

void require_finite_tau(double tau) {
  if (!std::isfinite(tau)) throw DomainError("tau must be finite");
}

// e^{-(gamma - i delta)|tau|}
ComplexAmplitude decay_factor(double tau, const AtomDriveParams& atom) {
  const double t = std::abs(tau);
  return std::exp(ComplexAmplitude(-atom.gamma() * t, atom.delta() * t));
}

}  // namespace

AtomDriveParams AtomDriveParams::from_rabi(double gamma, double delta, double rabi, RateForm form) {
  require_gamma(gamma);
  if (!std::isfinite(delta) || !std::isfinite(rabi)) throw DomainError("non-finite drive parameter");
  return {gamma, delta, rabi, fluoro::saturation(rabi, gamma, delta), form};
}

AtomDriveParams AtomDriveParams::from_saturation(double gamma, double delta, double s, RateForm form) {
  require_gamma(gamma);
  require_saturation(s);
  if (!std::isfinite(delta)) throw DomainError("non-finite detuning");
  return {gamma, delta, fluoro::rabi_from_saturation(s, gamma, delta), s, form};
}

AtomDriveParams AtomDriveParams::from_both(double gamma, double delta, double rabi, double s,
                                           RateForm form) {
  auto p = from_rabi(gamma, delta, rabi, form);
  require_saturation(s);
  const double scale = std::max(std::abs(s), std::abs(p.saturation_));
  if (scale > 0.0 && std::abs(p.saturation_ - s) > 1e-12 * scale) {
    throw DomainError("rabi and saturation are inconsistent: rabi implies S=" +
                      std::to_string(p.saturation_) + ", given " + std::to_string(s));
  }
  return p;
}

void FilterParams::validate() const {
  if (!(kappa0 > 0.0) || !std::isfinite(kappa0)) throw DomainError("kappa0 must be positive");
  if (!(kappa_ext >= 0.0) || !std::isfinite(kappa_ext)) throw DomainError("kappa_ext must be >= 0");
  if (!std::isfinite(res_offset)) throw DomainError("res_offset must be finite");
}

void DetectionParams::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta must lie in [0, 1]");
  if (!(dark_rate >= 0.0) || !std::isfinite(dark_rate)) throw DomainError("dark_rate must be >= 0");
}

double saturation(double rabi, double gamma, double delta) {
  require_gamma(gamma);
  const double r = rabi / gamma;
  const double d = delta / gamma;
  return 0.5 * r * r / (1.0 + d * d);
}

double rabi_from_saturation(double s, double gamma, double delta) {
  require_gamma(gamma);
  require_saturation(s);
  const double d = delta / gamma;
  return gamma * std::sqrt(2.0 * s * (1.0 + d * d));
}

double coherent_rate(double s, double gamma, RateForm form) {
  require_saturation(s);
  if (form == RateForm::LowSaturation) return gamma * (s - 2.0 * s * s);
  return gamma * s / ((s + 1.0) * (s + 1.0));
}

double incoherent_rate(double s, double gamma, RateForm form) {
  require_saturation(s);
  if (form == RateForm::LowSaturation) return gamma * s * s;
  return gamma * s * s / ((s + 1.0) * (s + 1.0));
}

double two_photon_coherent_amp(double s, double gamma, RateForm form) {
  return 0.5 * coherent_rate(s, gamma, form);
}

ComplexAmplitude two_photon_incoherent_amp(double tau, const AtomDriveParams& atom) {
  require_finite_tau(tau);
  const double half = two_photon_coherent_amp(atom.saturation(), atom.gamma(), atom.rate_form());
  return -half * decay_factor(tau, atom);
}

ComplexAmplitude two_photon_total_amp(double tau, const AtomDriveParams& atom) {
  require_finite_tau(tau);
  const double half = two_photon_coherent_amp(atom.saturation(), atom.gamma(), atom.rate_form());
  return half * (1.0 - decay_factor(tau, atom));
}

ComplexAmplitude filter_transmission(const FilterParams& f, double probe_offset) {
  return ComplexAmplitude(f.kappa0 - f.kappa_ext, probe_offset) /
         ComplexAmplitude(f.kappa0 + f.kappa_ext, probe_offset);
}

ComplexAmplitude laser_transmission(const FilterParams& f) {
  return filter_transmission(f, -f.res_offset);
}

ComplexAmplitude filtered_two_photon_amp(double tau, const AtomDriveParams& atom,
                                         const FilterParams& filter) {
  require_finite_tau(tau);
  const double half = two_photon_coherent_amp(atom.saturation(), atom.gamma(), atom.rate_form());
  const ComplexAmplitude t = laser_transmission(filter);
  return half * (t * t - decay_factor(tau, atom));
}

double pair_prefactor(const AtomDriveParams& atom) {
  if (atom.rate_form() == RateForm::LowSaturation) return atom.gamma() * atom.saturation();
  return coherent_rate(atom.saturation(), atom.gamma(), RateForm::Exact);
}

Flux mean_flux(const AtomDriveParams& atom, ComplexAmplitude t_laser, double eta) {
  const double s = atom.saturation();
  return {eta * std::norm(t_laser) * coherent_rate(s, atom.gamma(), atom.rate_form()),
          eta * incoherent_rate(s, atom.gamma(), atom.rate_form())};
}

double unnormalized_g2(double tau, const AtomDriveParams& atom, ComplexAmplitude t_laser, double eta) {
  require_finite_tau(tau);
  const double a = eta * pair_prefactor(atom);
  return a * a * std::norm(t_laser * t_laser - decay_factor(tau, atom));
}

double g2_from_intensities(double big_g2, double flux, double dark_rate) {
  const double denom = flux + dark_rate;
  if (!(denom > 0.0)) throw DomainError("total detected rate n + d must be positive");
  return (big_g2 - flux * flux) / (denom * denom) + 1.0;
}

double g2_ideal(double tau, const AtomDriveParams& atom, const FilterParams& filter) {
  const ComplexAmplitude t = laser_transmission(filter);
  const double n = mean_flux(atom, t, 1.0).total();
  if (!(n > 0.0)) {
    throw DomainError("g2 normalization undefined: filtered flux is zero (S=0 or t_F=0 with no incoherent light)");
  }
  return unnormalized_g2(tau, atom, t, 1.0) / (n * n);
}

double g2_experimental(double tau, const AtomDriveParams& atom, const FilterParams& filter,
                       const DetectionParams& det) {
  det.validate();
  const ComplexAmplitude t = laser_transmission(filter);
  const double n = mean_flux(atom, t, det.eta).total();
  return g2_from_intensities(unnormalized_g2(tau, atom, t, det.eta), n, det.dark_rate);
}

HomAmplitudes hom_decomposition(double tau, const AtomDriveParams& atom, const FilterParams& filter) {
  require_finite_tau(tau);
  const double ncoh = coherent_rate(atom.saturation(), atom.gamma(), atom.rate_form());
  const ComplexAmplitude tm1 = laser_transmission(filter) - 1.0;
  HomAmplitudes h;
  h.fluorescence = 0.5 * ncoh * (1.0 - decay_factor(tau, atom));
  h.resonator = 0.5 * ncoh * tm1 * tm1;
  h.cross = ncoh * tm1;
  h.sum = h.fluorescence + h.resonator + h.cross;
  return h;
}

ComplexAmplitude intracavity_amplitude(const AtomDriveParams& atom, const FilterParams& f,
                                       double probe_offset) {
  const double ncoh = coherent_rate(atom.saturation(), atom.gamma(), atom.rate_form());
  return -std::sqrt(ncoh) * std::sqrt(2.0 * f.kappa_ext) /
         ComplexAmplitude(f.kappa_ext + f.kappa0, probe_offset);
}

SpectrumPoint emission_spectrum(double omega_offset, const AtomDriveParams& atom) {
  const double g = atom.gamma();
  const double s = atom.saturation();
  auto lorentz = [g](double x) { return (g / std::numbers::pi) / (x * x + g * g); };
  SpectrumPoint p;
  if (omega_offset == 0.0) p.coherent_weight = coherent_rate(s, g, atom.rate_form());
  p.incoherent_density = 0.5 * incoherent_rate(s, g, atom.rate_form()) *
                         (lorentz(omega_offset - atom.delta()) + lorentz(omega_offset + atom.delta()));
  return p;
}

}  // namespace fluoro
