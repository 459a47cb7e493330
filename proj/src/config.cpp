#include "fluoro/config.hpp"

#include <cmath>
#include <fstream>

#include "fluoro/error.hpp"
#include "fluoro/units.hpp"

namespace fluoro {
namespace {

using json = nlohmann::ordered_json;
using namespace units;

constexpr const char* kDefaults = R"({
  "atom": {"gamma_mhz": 3.033, "delta_mhz": -57.9, "saturation": 0.025, "rabi_mhz": null,
           "rate_form": "low_saturation"},
  "filter": {"kappa0_mhz": 1.08, "kappa_ext_mhz": 0.0, "res_offset_mhz": 0.0},
  "detection": {"eta": 0.00136, "dark_rate": 120.0},
  "trap": {"depth_mk": 1.66, "waist_um": 1.8, "wavelength_nm": 784.65, "mot_detuning_mhz": -16.3,
           "stark_max_mhz": null},
  "ensemble": {"temperature_uk": 144.0, "samples": 4000, "seed": 1, "positions": "monte_carlo"},
  "drift": {"mean_offset_mhz": -0.26, "sigma_mhz": 1.92, "nodes": 21},
  "model": {"tau_max_ns": 100.0, "tau_step_ns": 0.1, "spectrum_max_mhz": 150.0, "spectrum_step_mhz": 0.25},
  "scan": {"kext_min": 0.0, "kext_max": 5.0, "kext_step": 0.05, "ensemble": true},
  "simulate": {"mode": "renewal", "target": "single", "background": true, "mean_rate": 200000.0,
               "dark_rate": 0.0, "duration_s": 5.0, "seed": 1, "table_span_ns": 200.0,
               "table_step_ns": 0.1, "dead_time_ns": 0.0, "split": true, "split_seed": 2},
  "correlate": {"bin_ns": 1.0, "window_ns": 1000.0, "duration_s": 0.0},
  "fit": {"kind": "temperature", "max_tau_ns": 100.0, "tail_start_us": 0.5, "baseline_level": 1.0,
          "baseline_mode": "multiplicative", "initial_temperature_uk": 100.0,
          "initial_stark_max_mhz": null, "initial_mean_offset_mhz": 0.0, "initial_sigma_mhz": null,
          "quadrature_nodes": 48}
})";

void check_against(const json& user, const json& defaults, const std::string& path) {
  if (!user.is_object()) throw ConfigError("'" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown configuration key '" + where + "'");
    const auto& def = defaults.at(key);
    if (def.is_object()) {
      check_against(value, def, where);
    } else if (def.is_null() || def.is_number()) {
      if (!value.is_number() && !(def.is_null() && value.is_null())) {
        throw ConfigError("'" + where + "' must be a number");
      }
    } else if (def.is_boolean() && !value.is_boolean()) {
      throw ConfigError("'" + where + "' must be true or false");
    } else if (def.is_string() && !value.is_string()) {
      throw ConfigError("'" + where + "' must be a string");
    }
  }
}

void merge_into(json& base, const json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      merge_into(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

json parse_override(const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not of the form key=value");
  const std::string path = item.substr(0, eq);
  const std::string text = item.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json patch = json::object();
  json* node = &patch;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + path + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    *node = json::object();
    start = dot + 1;
  }
  return patch;
}

double num(const json& j, const char* key) { return j.at(key).get<double>(); }

std::int64_t integer(const json& j, const char* key) {
  const double v = j.at(key).get<double>();
  if (v != std::floor(v) || std::abs(v) > 9.0e15) throw ConfigError(std::string("'") + key + "' must be an integer");
  return static_cast<std::int64_t>(v);
}

std::uint64_t seed_value(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const auto i = integer(j, key);
  if (i < 0) throw ConfigError(std::string("'") + key + "' must be >= 0");
  return static_cast<std::uint64_t>(i);
}

std::int64_t to_ps(double ns, const char* what) {
  const auto ps = static_cast<std::int64_t>(std::llround(ns * 1000.0));
  if (ps < 1) throw ConfigError(std::string(what) + " must be at least 1 ps");
  return ps;
}

template <class Enum>
Enum choose(const json& j, const char* key, std::initializer_list<std::pair<const char*, Enum>> options) {
  const auto s = j.at(key).get<std::string>();
  std::string list;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    list += (list.empty() ? "" : ", ") + std::string(name);
  }
  throw ConfigError(std::string("'") + key + "' must be one of " + list + "; got '" + s + "'");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

AtomDriveParams RunConfig::mot_drive() const {
  return AtomDriveParams::from_rabi(atom.gamma(), mot_detuning, atom.rabi(), atom.rate_form());
}

PositionSet RunConfig::position_set() const {
  if (positions == PositionMethod::Quadrature) return thermal_quadrature(trap, ensemble.temperature);
  const auto samples = sample_positions(trap, ensemble);
  return equal_weights(samples);
}

json default_config_json() { return json::parse(kDefaults); }

RunConfig config_from_json(const json& user) {
  const json defaults = default_config_json();
  check_against(user, defaults, "");
  json c = defaults;
  merge_into(c, user);

  RunConfig cfg;
  try {
    const auto& a = c["atom"];
    const auto form = choose<RateForm>(a, "rate_form", {{"low_saturation", RateForm::LowSaturation},
                                                        {"exact", RateForm::Exact}});
    const double gamma = mhz_to_angular(num(a, "gamma_mhz"));
    const double delta = mhz_to_angular(num(a, "delta_mhz"));
    const bool user_rabi = user.contains("atom") && user["atom"].contains("rabi_mhz") && !a["rabi_mhz"].is_null();
    const bool user_sat = user.contains("atom") && user["atom"].contains("saturation");
    if (user_rabi && user_sat) {
      cfg.atom = AtomDriveParams::from_both(gamma, delta, mhz_to_angular(num(a, "rabi_mhz")), num(a, "saturation"), form);
    } else if (user_rabi) {
      cfg.atom = AtomDriveParams::from_rabi(gamma, delta, mhz_to_angular(num(a, "rabi_mhz")), form);
      c["atom"]["saturation"] = cfg.atom.saturation();
    } else {
      cfg.atom = AtomDriveParams::from_saturation(gamma, delta, num(a, "saturation"), form);
    }
    c["atom"]["rabi_mhz"] = angular_to_mhz(cfg.atom.rabi());

    const auto& f = c["filter"];
    cfg.filter.kappa0 = mhz_to_angular(num(f, "kappa0_mhz"));
    cfg.filter.kappa_ext = mhz_to_angular(num(f, "kappa_ext_mhz"));
    cfg.filter.res_offset = mhz_to_angular(num(f, "res_offset_mhz"));
    cfg.filter.validate();

    const auto& d = c["detection"];
    cfg.detection.eta = num(d, "eta");
    cfg.detection.dark_rate = num(d, "dark_rate");
    cfg.detection.validate();

    const auto& e = c["ensemble"];
    cfg.ensemble.temperature = uk_to_k(num(e, "temperature_uk"));
    cfg.ensemble.sample_count = static_cast<int>(integer(e, "samples"));
    cfg.ensemble.seed = seed_value(e, "seed");
    cfg.ensemble.validate();
    cfg.positions = choose<PositionMethod>(e, "positions", {{"monte_carlo", PositionMethod::MonteCarlo},
                                                            {"quadrature", PositionMethod::Quadrature}});

    const auto& t = c["trap"];
    cfg.trap.depth = mk_to_k(num(t, "depth_mk"));
    cfg.trap.waist = um_to_m(num(t, "waist_um"));
    cfg.trap.trap_wavelength = nm_to_m(num(t, "wavelength_nm"));
    cfg.mot_detuning = mhz_to_angular(num(t, "mot_detuning_mhz"));
    cfg.trap.stark_max = 0.0;
    cfg.trap.validate();
    require(cfg.ensemble.temperature < cfg.trap.depth, "ensemble.temperature_uk must be below the trap depth");
    if (t["stark_max_mhz"].is_null()) {
      // Chosen so that the ensemble-mean detuning equals atom.delta_mhz.
      const auto set = cfg.position_set();
      cfg.trap.stark_max = stark_max_for_mean_detuning(set, cfg.trap, cfg.mot_detuning, cfg.atom.delta());
      c["trap"]["stark_max_mhz"] = angular_to_mhz(cfg.trap.stark_max);
    } else {
      cfg.trap.stark_max = mhz_to_angular(num(t, "stark_max_mhz"));
    }
    cfg.trap.validate();

    const auto& dr = c["drift"];
    cfg.drift.mean_offset = mhz_to_angular(num(dr, "mean_offset_mhz"));
    cfg.drift.sigma = mhz_to_angular(num(dr, "sigma_mhz"));
    cfg.drift.nodes = static_cast<int>(integer(dr, "nodes"));
    cfg.drift.validate();

    const auto& m = c["model"];
    cfg.model.tau_max = ns_to_s(num(m, "tau_max_ns"));
    cfg.model.tau_step = ns_to_s(num(m, "tau_step_ns"));
    cfg.model.omega_max = mhz_to_angular(num(m, "spectrum_max_mhz"));
    cfg.model.omega_step = mhz_to_angular(num(m, "spectrum_step_mhz"));
    require(cfg.model.tau_max >= 0.0 && cfg.model.tau_step > 0.0, "model tau grid must have tau_max >= 0, tau_step > 0");
    require(cfg.model.omega_max >= 0.0 && cfg.model.omega_step > 0.0, "model spectrum grid must have max >= 0, step > 0");

    const auto& s = c["scan"];
    cfg.scan.kext_min = num(s, "kext_min");
    cfg.scan.kext_max = num(s, "kext_max");
    cfg.scan.kext_step = num(s, "kext_step");
    cfg.scan.ensemble = s["ensemble"].get<bool>();
    require(cfg.scan.kext_min >= 0.0 && cfg.scan.kext_max >= cfg.scan.kext_min && cfg.scan.kext_step > 0.0,
            "scan grid must satisfy 0 <= kext_min <= kext_max and kext_step > 0");

    const auto& sim = c["simulate"];
    cfg.simulate.mode = choose<GeneratorMode>(sim, "mode", {{"renewal", GeneratorMode::Renewal},
                                                            {"pair_excess", GeneratorMode::PairExcess}});
    cfg.simulate.target = choose<SimTarget>(sim, "target", {{"single", SimTarget::Single},
                                                            {"ensemble", SimTarget::Ensemble}});
    cfg.simulate.background = sim["background"].get<bool>();
    cfg.simulate.mean_rate = num(sim, "mean_rate");
    cfg.simulate.dark_rate = num(sim, "dark_rate");
    cfg.simulate.duration = num(sim, "duration_s");
    cfg.simulate.seed = seed_value(sim, "seed");
    cfg.simulate.table_span = ns_to_s(num(sim, "table_span_ns"));
    cfg.simulate.table_step = ns_to_s(num(sim, "table_step_ns"));
    cfg.simulate.dead_time = ns_to_s(num(sim, "dead_time_ns"));
    cfg.simulate.split = sim["split"].get<bool>();
    cfg.split_seed = seed_value(sim, "split_seed");
    require(cfg.simulate.mean_rate >= 0.0 && cfg.simulate.dark_rate >= 0.0, "simulate rates must be >= 0");
    require(cfg.simulate.duration > 0.0, "simulate.duration_s must be > 0");
    require(cfg.simulate.table_span > 0.0 && cfg.simulate.table_step > 0.0 &&
                cfg.simulate.table_step <= cfg.simulate.table_span,
            "simulate table needs 0 < table_step_ns <= table_span_ns");
    require(cfg.simulate.dead_time >= 0.0, "simulate.dead_time_ns must be >= 0");

    const auto& co = c["correlate"];
    cfg.correlate.bin_width_ps = to_ps(num(co, "bin_ns"), "correlate.bin_ns");
    cfg.correlate.window_ps = to_ps(num(co, "window_ns"), "correlate.window_ns");
    cfg.correlate.duration = num(co, "duration_s");

    const auto& fi = c["fit"];
    cfg.fit.kind = choose<FitKind>(fi, "kind", {{"kappa0", FitKind::Kappa0},
                                                {"baseline", FitKind::Baseline},
                                                {"temperature", FitKind::Temperature},
                                                {"drift", FitKind::Drift},
                                                {"eta", FitKind::Eta}});
    cfg.fit.max_tau = ns_to_s(num(fi, "max_tau_ns"));
    cfg.fit.tail_start = us_to_s(num(fi, "tail_start_us"));
    cfg.fit.baseline.level = num(fi, "baseline_level");
    cfg.fit.baseline.mode = choose<BaselineMode>(fi, "baseline_mode", {{"multiplicative", BaselineMode::Multiplicative},
                                                                      {"offset", BaselineMode::Offset}});
    cfg.fit.initial_temperature = uk_to_k(num(fi, "initial_temperature_uk"));
    cfg.fit.initial_stark_max =
        fi["initial_stark_max_mhz"].is_null() ? cfg.trap.stark_max : mhz_to_angular(num(fi, "initial_stark_max_mhz"));
    cfg.fit.initial_mean_offset = mhz_to_angular(num(fi, "initial_mean_offset_mhz"));
    cfg.fit.initial_sigma =
        fi["initial_sigma_mhz"].is_null() ? cfg.filter.kappa0 : mhz_to_angular(num(fi, "initial_sigma_mhz"));
    cfg.fit.quadrature_nodes = static_cast<int>(integer(fi, "quadrature_nodes"));
    require(cfg.fit.max_tau > 0.0, "fit.max_tau_ns must be > 0");
    require(cfg.fit.baseline.level > 0.0, "fit.baseline_level must be > 0");
    require(cfg.fit.quadrature_nodes >= 1, "fit.quadrature_nodes must be >= 1");
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
  cfg.effective = std::move(c);
  return cfg;
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  json user = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open configuration file " + file->string());
    user = json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError("configuration file " + file->string() + " is not valid JSON");
    if (!user.is_object()) throw ConfigError("configuration file must contain a JSON object");
  }
  for (const auto& item : overrides) merge_into(user, parse_override(item));
  return config_from_json(user);
}

}  // namespace fluoro
