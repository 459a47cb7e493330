#pragma once

// Closed-form photon statistics of weakly driven resonance fluorescence from a
// single two-level emitter, optionally passed through a ring-resonator notch
// filter that acts on the coherently scattered component only.
//
// All rates and detunings are angular (rad/s); tau is in seconds.

#include <complex>

namespace fluoro {

using ComplexAmplitude = std::complex<double>;

// Scattering-rate closed forms. LowSaturation uses the second-order expansions
// gamma(S - 2S^2) and gamma S^2 throughout; Exact keeps the (S+1)^-2 forms.
enum class RateForm { LowSaturation, Exact };

class AtomDriveParams {
 public:
  static AtomDriveParams from_rabi(double gamma, double delta, double rabi,
                                   RateForm form = RateForm::LowSaturation);
  static AtomDriveParams from_saturation(double gamma, double delta, double saturation,
                                         RateForm form = RateForm::LowSaturation);
  // Both given: they must satisfy the saturation relation to 1e-12 relative.
  static AtomDriveParams from_both(double gamma, double delta, double rabi, double saturation,
                                   RateForm form = RateForm::LowSaturation);

  double gamma() const { return gamma_; }
  double delta() const { return delta_; }
  double rabi() const { return rabi_; }
  double saturation() const { return saturation_; }
  RateForm rate_form() const { return form_; }

 private:
  AtomDriveParams(double gamma, double delta, double rabi, double saturation, RateForm form)
      : gamma_(gamma), delta_(delta), rabi_(rabi), saturation_(saturation), form_(form) {}

  double gamma_;
  double delta_;
  double rabi_;
  double saturation_;
  RateForm form_;
};

struct FilterParams {
  double kappa0 = 1.0;      // intrinsic loss rate
  double kappa_ext = 0.0;   // external coupling rate
  double res_offset = 0.0;  // omega_res - omega_L

  void validate() const;
};

struct DetectionParams {
  double eta = 1.0;
  double dark_rate = 0.0;  // events/s

  void validate() const;
};

// ---- drive and scattering rates ----

double saturation(double rabi, double gamma, double delta);
double rabi_from_saturation(double saturation, double gamma, double delta);
double coherent_rate(double saturation, double gamma, RateForm form = RateForm::LowSaturation);
double incoherent_rate(double saturation, double gamma, RateForm form = RateForm::LowSaturation);

// ---- two-photon amplitudes ----

// alpha^(2) = n_coh / 2, constant in tau.
double two_photon_coherent_amp(double saturation, double gamma,
                               RateForm form = RateForm::LowSaturation);
// phi^(2)(tau) = -(n_coh/2) exp(-(gamma - i delta)|tau|)
ComplexAmplitude two_photon_incoherent_amp(double tau, const AtomDriveParams& atom);
// psi^(2)(tau) = alpha^(2) + phi^(2)(tau)
ComplexAmplitude two_photon_total_amp(double tau, const AtomDriveParams& atom);

// ---- filter ----

// probe_offset = omega - omega_res. |t_F| <= 1 for kappa_ext >= 0.
ComplexAmplitude filter_transmission(const FilterParams& filter, double probe_offset);
// t_F at the drive laser frequency, i.e. probe_offset = -res_offset.
ComplexAmplitude laser_transmission(const FilterParams& filter);

// Two-photon amplitude after the filter: (n_coh/2)(t_F(omega_L)^2 - e^{-(gamma - i delta)|tau|}).
ComplexAmplitude filtered_two_photon_amp(double tau, const AtomDriveParams& atom,
                                         const FilterParams& filter);

// ---- correlation functions ----

struct Flux {
  double coherent = 0.0;    // eta |t_F|^2 n_coh
  double incoherent = 0.0;  // eta n_inc
  double total() const { return coherent + incoherent; }
};

// Detected photon flux after the filter, excluding background.
Flux mean_flux(const AtomDriveParams& atom, ComplexAmplitude t_laser, double eta);
// A in G2 = eta^2 A^2 |t_F^2 - e^{-(gamma - i delta)|tau|}|^2: gamma S for the
// low-saturation form, n_coh for the exact one.
double pair_prefactor(const AtomDriveParams& atom);
// Unnormalized G2(tau) including eta^2.
double unnormalized_g2(double tau, const AtomDriveParams& atom, ComplexAmplitude t_laser, double eta);

// Background-free normalized g2; eta cancels. Throws DomainError on zero flux.
double g2_ideal(double tau, const AtomDriveParams& atom, const FilterParams& filter);
// (G2 - n^2)/(n + d)^2 + 1. Throws DomainError when n + d = 0.
double g2_experimental(double tau, const AtomDriveParams& atom, const FilterParams& filter,
                       const DetectionParams& detection);
// Background correction on precomputed intensities; shared with the ensemble average.
double g2_from_intensities(double big_g2, double flux, double dark_rate);

// ---- resonator picture ----

struct HomAmplitudes {
  ComplexAmplitude fluorescence;  // both photons from the incident fluorescence
  ComplexAmplitude resonator;     // both photons from the intracavity field
  ComplexAmplitude cross;         // one photon from each
  ComplexAmplitude sum;
};

HomAmplitudes hom_decomposition(double tau, const AtomDriveParams& atom, const FilterParams& filter);

// Steady-state coherent amplitude stored in the resonator at probe_offset = omega - omega_res.
ComplexAmplitude intracavity_amplitude(const AtomDriveParams& atom, const FilterParams& filter,
                                       double probe_offset);

// ---- spectrum ----

struct SpectrumPoint {
  double coherent_weight = 0.0;     // n_coh at omega_offset == 0 (delta line), else 0
  double incoherent_density = 0.0;  // photons/s per rad/s
};

// omega_offset = omega - omega_L. Incoherent part: two Lorentzians of HWHM gamma at +-delta
// carrying n_inc in total.
SpectrumPoint emission_spectrum(double omega_offset, const AtomDriveParams& atom);

}  // namespace fluoro
