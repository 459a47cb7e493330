#pragma once

// Run configuration. Files and --set overrides use user units (MHz ordinary
// frequency, ns, us, um, uK, mK); load_config converts everything to SI and
// angular frequency in one place.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fluoro/core_model.hpp"
#include "fluoro/ensemble.hpp"
#include "fluoro/fitting.hpp"
#include "fluoro/timetag_sim.hpp"
#include "json.hpp"

namespace fluoro {

enum class PositionMethod { MonteCarlo, Quadrature };

struct ModelGrid {
  double tau_max = 100e-9;   // s; tau runs over [0, tau_max]
  double tau_step = 0.1e-9;
  double omega_max = 0.0;    // rad/s; spectrum over [-omega_max, omega_max]
  double omega_step = 0.0;
};

struct ScanGrid {
  double kext_min = 0.0;  // in units of kappa0
  double kext_max = 5.0;
  double kext_step = 0.05;
  bool ensemble = true;   // false: single atom at the mean detuning, no drift
};

enum class SimTarget { Single, Ensemble };

struct SimulateSettings {
  GeneratorMode mode = GeneratorMode::Renewal;
  SimTarget target = SimTarget::Single;
  bool background = true;     // include the detection background in the target g2
  double mean_rate = 2.0e5;   // 1/s
  double dark_rate = 0.0;     // extra Poisson events added by the generator, 1/s
  double duration = 5.0;      // s
  std::uint64_t seed = 1;
  double table_span = 200e-9; // s
  double table_step = 0.1e-9;
  double dead_time = 0.0;
  bool split = true;          // write a two-channel HBT stream
};

struct CorrelateSettings {
  std::int64_t bin_width_ps = 1000;
  std::int64_t window_ps = 1'000'000;
  double duration = 0.0;     // s; <= 0 uses the stream span
};

enum class FitKind { Kappa0, Baseline, Temperature, Drift, Eta };

struct FitSettings {
  FitKind kind = FitKind::Temperature;
  double max_tau = 100e-9;            // s, fit range |tau| <= max_tau
  double tail_start = 0.5e-6;         // s, baseline fit
  BaselineCorrection baseline;
  double initial_temperature = 100e-6;
  double initial_stark_max = 0.0;     // rad/s; 0 uses the configured trap value
  double initial_mean_offset = 0.0;   // rad/s
  double initial_sigma = 0.0;         // rad/s; 0 uses kappa0
  int quadrature_nodes = 48;
};

struct RunConfig {
  AtomDriveParams atom = AtomDriveParams::from_rabi(1.0, 0.0, 0.0);  // at the mean detuning
  FilterParams filter;
  DetectionParams detection;
  TrapParams trap;            // stark_max resolved at load
  double mot_detuning = 0.0;  // delta_MOT, rad/s
  ThermalEnsemble ensemble;
  PositionMethod positions = PositionMethod::MonteCarlo;
  DriftModel drift;
  ModelGrid model;
  ScanGrid scan;
  SimulateSettings simulate;
  CorrelateSettings correlate;
  FitSettings fit;
  std::uint64_t split_seed = 2;
  nlohmann::ordered_json effective;  // merged user-unit configuration

  // Bare drive seen by an atom outside the trap beam: delta = delta_MOT and
  // the Rabi frequency of `atom`.
  AtomDriveParams mot_drive() const;
  PositionSet position_set() const;
};

// Built-in defaults (the reference experimental parameter set) in user units.
nlohmann::ordered_json default_config_json();

// Merge order: defaults, file, then each "a.b=value" override. Unknown keys
// and mistyped values throw ConfigError.
RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const std::vector<std::string>& overrides = {});
RunConfig config_from_json(const nlohmann::ordered_json& user);

}  // namespace fluoro
