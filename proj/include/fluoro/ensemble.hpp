#pragma once

// Averages of the single-atom model over the thermal position distribution in
// a Gaussian-beam dipole trap (position-dependent AC-Stark shift) and over a
// Gaussian distribution of filter resonance offsets.
//
// Intensities G2 and n are averaged separately and combined afterwards; the
// normalized g2 is never averaged pointwise.

#include <cstdint>
#include <span>
#include <vector>

#include "fluoro/core_model.hpp"

namespace fluoro {

struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct TrapParams {
  double depth = 1.66e-3;              // U_trap / k_B in K
  double waist = 1.8e-6;               // m
  double trap_wavelength = 784.65e-9;  // m
  double stark_max = 0.0;              // AC-Stark shift at the trap centre, rad/s

  void validate() const;
  double rayleigh_range() const;
  // I(r)/I(0) of the trap beam.
  double relative_intensity(const Position& p) const;
};

struct ThermalEnsemble {
  double temperature = 144e-6;  // K
  int sample_count = 4000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DriftModel {
  double mean_offset = 0.0;  // delta = omega_res - omega_L, rad/s
  double sigma = 0.0;        // rad/s
  int nodes = 21;            // Gauss-Hermite order

  void validate() const;
};

// Cylinder r <= radius, |z| <= half_length on which the Boltzmann density is
// supported: the harmonic turning points at the trap depth, shrunk to eight
// thermal widths for cold atoms.
struct ThermalSupport {
  double radius = 0.0;
  double half_length = 0.0;
};
ThermalSupport thermal_support(const TrapParams& trap, double temperature);

struct WeightedPosition {
  Position pos;
  double weight = 0.0;
};
using PositionSet = std::vector<WeightedPosition>;

// Rejection sampling of exp(-U(r)/k_B T) on the thermal support. Sample i uses
// its own RNG stream derived from (seed, i), so the first N samples of a larger
// draw equal an N-sample draw with the same seed.
std::vector<Position> sample_positions(const TrapParams& trap, const ThermalEnsemble& ensemble);
PositionSet equal_weights(std::span<const Position> positions);

// Deterministic (r, z) Gauss-Legendre quadrature of the same density; smooth in
// the temperature, used by the fits.
PositionSet thermal_quadrature(const TrapParams& trap, double temperature, int radial_nodes = 48,
                               int axial_nodes = 48);

// Local drive at a trap position: detuning delta_MOT - stark_max I(r)/I(0), same
// Rabi frequency. drive.delta() is the bare laser-atom detuning delta_MOT.
AtomDriveParams effective_params(const Position& pos, const TrapParams& trap,
                                 const AtomDriveParams& drive);

double mean_detuning(std::span<const WeightedPosition> set, const TrapParams& trap,
                     const AtomDriveParams& drive);
// Stark shift at the trap centre that puts the ensemble-mean detuning at target_delta.
double stark_max_for_mean_detuning(std::span<const WeightedPosition> set, const TrapParams& trap,
                                   double mot_detuning, double target_delta);

// ---- factorized averages ----

// tau-dependent averages over positions of the pair prefactor A^2 and rates.
struct PositionMoments {
  std::vector<double> taus;
  double a2 = 0.0;                        // <A^2>
  double coherent = 0.0;                  // <n_coh>
  double incoherent = 0.0;                // <n_inc>
  std::vector<ComplexAmplitude> a2_econj; // <A^2 conj(e(tau))>
  std::vector<double> a2_e2;              // <A^2 |e(tau)|^2>
};

struct DriftMoments {
  ComplexAmplitude t2;  // <t^2>
  double abs2 = 0.0;    // <|t|^2>
  double abs4 = 0.0;    // <|t|^4>
};

PositionMoments position_moments(std::span<const WeightedPosition> set, const TrapParams& trap,
                                 const AtomDriveParams& drive, std::span<const double> taus);
DriftMoments drift_moments(const FilterParams& filter, const DriftModel& drift);

struct EnsembleIntensities {
  std::vector<double> big_g2;  // <G2>(tau), includes eta^2
  Flux flux;                   // <n>, includes eta
};

EnsembleIntensities combine_moments(const PositionMoments& pm, const DriftMoments& dm, double eta);
std::vector<double> g2_from_ensemble(const EnsembleIntensities& in, double dark_rate);

// ---- public ensemble operations ----

// filter.res_offset is ignored; resonance offsets are drawn from drift.
std::vector<double> ensemble_g2(std::span<const double> taus, std::span<const WeightedPosition> set,
                                const TrapParams& trap, const AtomDriveParams& drive,
                                const FilterParams& filter, const DriftModel& drift,
                                const DetectionParams& detection);
double ensemble_g2(double tau, const ThermalEnsemble& ensemble, const TrapParams& trap,
                   const AtomDriveParams& drive, const FilterParams& filter, const DriftModel& drift,
                   const DetectionParams& detection);

Flux ensemble_flux(std::span<const WeightedPosition> set, const TrapParams& trap,
                   const AtomDriveParams& drive, const FilterParams& filter, const DriftModel& drift,
                   const DetectionParams& detection);
Flux ensemble_flux(const ThermalEnsemble& ensemble, const TrapParams& trap,
                   const AtomDriveParams& drive, const FilterParams& filter, const DriftModel& drift,
                   const DetectionParams& detection);

// g2 with Monte Carlo standard error (delta method over per-sample intensities).
// Requires an equally weighted sample set.
struct EnsembleEstimate {
  double value = 0.0;
  double std_error = 0.0;
};
EnsembleEstimate ensemble_g2_estimate(double tau, std::span<const Position> samples,
                                      const TrapParams& trap, const AtomDriveParams& drive,
                                      const FilterParams& filter, const DriftModel& drift,
                                      const DetectionParams& detection);

namespace reference {

// Serial brute-force joint average over (position, drift node) pairs using
// core-model intensities directly.
EnsembleIntensities joint_average(std::span<const double> taus, std::span<const WeightedPosition> set,
                                  const TrapParams& trap, const AtomDriveParams& drive,
                                  const FilterParams& filter, const DriftModel& drift, double eta);

PositionMoments position_moments(std::span<const WeightedPosition> set, const TrapParams& trap,
                                 const AtomDriveParams& drive, std::span<const double> taus);

}  // namespace reference

}  // namespace fluoro
