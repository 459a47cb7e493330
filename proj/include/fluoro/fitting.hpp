#pragma once

// Parameter estimation for the filtered-fluorescence model, in pipeline order:
// filter loss rate, then (temperature, maximum AC-Stark shift) on unfiltered
// g2 data, then filter drift (mean offset, width) on filtered data, then the
// detection efficiency on count rates. Each stage takes the upstream results
// as fixed inputs.

#include <optional>
#include <string>
#include <vector>

#include "fluoro/core_model.hpp"
#include "fluoro/correlator.hpp"
#include "fluoro/ensemble.hpp"

namespace fluoro {

struct FitParameter {
  std::string name;
  std::string unit;  // SI unit of value/sigma/initial
  double value = 0.0;
  double sigma = 0.0;
  double initial = 0.0;
};

struct DerivedValue {
  std::string name;
  std::string unit;
  double value = 0.0;
  double sigma = 0.0;
};

struct FitResult {
  std::string kind;
  std::vector<FitParameter> parameters;
  std::vector<DerivedValue> derived;
  double residual_norm = 0.0;  // sqrt of the (weighted) sum of squares
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;
  int iterations = 0;
  std::string message;
  std::vector<std::string> warnings;

  const FitParameter& parameter(const std::string& name) const;
  const DerivedValue& derived_value(const std::string& name) const;
  double reduced_chi2() const { return dof > 0 ? chi2 / dof : 0.0; }
};

enum class BaselineMode { Multiplicative, Offset };

// Long-delay bunching correction: the model is rescaled so that its asymptote
// becomes level (= 1 + A from fit_baseline).
struct BaselineCorrection {
  double level = 1.0;
  BaselineMode mode = BaselineMode::Multiplicative;
  double apply(double g2) const;
};

struct G2Data {
  std::vector<double> tau;  // s
  std::vector<double> g2;
  std::vector<double> err;  // 1 sigma, > 0
  BaselineCorrection baseline;

  void validate() const;
};

// Bins of a measured curve with |tau| <= max_abs_tau, using Poisson errors with
// the zero-count floor.
G2Data g2_data_from_curve(const G2Curve& curve, double max_abs_tau);

// ---- filter loss rate ----

struct TransmissionPoint {
  double kappa_ext = 0.0;     // rad/s
  double transmission = 0.0;  // on-resonance |t_F|^2
};

FitResult fit_filter_kappa0(const std::vector<TransmissionPoint>& data,
                            std::optional<double> initial_kappa0 = std::nullopt);

// ---- temperature and maximum Stark shift ----

struct TemperatureFitSetup {
  AtomDriveParams drive = AtomDriveParams::from_rabi(1.0, 0.0, 0.0);  // delta = delta_MOT
  TrapParams trap;            // stark_max is the initial guess
  DetectionParams detection;
  double initial_temperature = 100e-6;
  int quadrature_nodes = 48;
};

// Unfiltered (kappa_ext = 0) ensemble g2 on a fixed (r, z) quadrature.
std::vector<double> unfiltered_model(const G2Data& data, const TemperatureFitSetup& setup,
                                     double temperature, double stark_max);
FitResult fit_temperature_stark(const G2Data& data, const TemperatureFitSetup& setup);

// ---- filter drift ----

struct FilteredDataset {
  double kappa_ext = 0.0;  // rad/s
  G2Data data;
};

struct DriftFitSetup {
  AtomDriveParams drive = AtomDriveParams::from_rabi(1.0, 0.0, 0.0);
  TrapParams trap;            // with fitted stark_max
  double temperature = 144e-6;
  double kappa0 = 1.0;
  DetectionParams detection;
  double initial_mean_offset = 0.0;
  double initial_sigma = 1.0;
  int drift_nodes = 21;
  int quadrature_nodes = 48;
};

class DriftModelEvaluator {
 public:
  DriftModelEvaluator(const std::vector<FilteredDataset>& sets, const DriftFitSetup& setup);
  // Model g2 for dataset i at the given drift parameters.
  std::vector<double> model(std::size_t i, double mean_offset, double sigma) const;
  std::size_t size() const { return moments_.size(); }

 private:
  const std::vector<FilteredDataset>& sets_;
  DriftFitSetup setup_;
  std::vector<PositionMoments> moments_;
};

FitResult fit_drift(const std::vector<FilteredDataset>& sets, const DriftFitSetup& setup);

// ---- detection efficiency ----

struct RatePoint {
  double kappa_ext = 0.0;  // rad/s
  double rate = 0.0;       // background-corrected detected rate, 1/s
  double err = 0.0;        // optional; <= 0 means unweighted
};

struct EtaFitSetup {
  AtomDriveParams drive = AtomDriveParams::from_rabi(1.0, 0.0, 0.0);
  TrapParams trap;
  double temperature = 144e-6;
  double kappa0 = 1.0;
  DriftModel drift;
  int quadrature_nodes = 48;
};

// Model detected flux at eta = 1.
double unit_efficiency_flux(double kappa_ext, const EtaFitSetup& setup, const PositionSet& set);
FitResult fit_eta(const std::vector<RatePoint>& data, const EtaFitSetup& setup);

}  // namespace fluoro
