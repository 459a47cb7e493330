#include "fluoro/commands.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "fluoro/error.hpp"
#include "fluoro/timetag_sim.hpp"
#include "fluoro/ttg1.hpp"
#include "fluoro/units.hpp"

namespace fluoro {
namespace {

using json = nlohmann::ordered_json;
using namespace units;

// Grid points a, a + h, ... up to b inclusive (to a relative 1e-9 of h).
std::vector<double> grid(double a, double b, double h) {
  std::vector<double> v;
  const auto n = static_cast<long>(std::floor((b - a) / h + 1e-9));
  for (long i = 0; i <= n; ++i) v.push_back(a + static_cast<double>(i) * h);
  return v;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct UserUnit {
  std::string name;
  double factor;
};

UserUnit user_unit(const std::string& si) {
  if (si == "rad/s") return {"MHz", 1.0 / (kTwoPi * 1e6)};
  if (si == "K") return {"uK", 1e6};
  if (si == "s") return {"us", 1e6};
  return {si, 1.0};
}

G2Data g2_data_from_table(const CsvTable& t, double max_abs_tau) {
  if (t.meta("bin_width_ps")) return g2_data_from_curve(normalize_g2(histogram_from_table(t)), max_abs_tau);
  G2Data d;
  const auto tau = t.values("tau_ns");
  const auto g = t.values("g2");
  const auto e = t.values("g2_err");
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (std::abs(tau[k]) * 1e-9 > max_abs_tau) continue;
    d.tau.push_back(ns_to_s(tau[k]));
    d.g2.push_back(g[k]);
    d.err.push_back(e[k]);
  }
  return d;
}

FitResult baseline_result(const BaselineFit& b, double tail_start) {
  FitResult r;
  r.kind = "baseline";
  r.parameters.push_back({"amplitude", "1", b.amplitude, b.amplitude_error, 0.0});
  r.parameters.push_back({"decay_time", "s", b.decay_time, b.decay_time_error, 0.0});
  r.derived.push_back({"baseline", "1", b.baseline(), b.amplitude_error});
  r.derived.push_back({"tail_start", "s", tail_start, 0.0});
  r.chi2 = b.chi2;
  r.residual_norm = std::sqrt(b.chi2);
  r.dof = b.dof;
  r.converged = b.converged;
  r.iterations = b.iterations;
  r.message = "1 + A exp(-|tau|/t_b) over |tau| >= tail_start";
  return r;
}

TemperatureFitSetup temperature_setup(const RunConfig& cfg) {
  TemperatureFitSetup s;
  s.drive = cfg.mot_drive();
  s.trap = cfg.trap;
  s.trap.stark_max = cfg.fit.initial_stark_max;
  s.detection = cfg.detection;
  s.initial_temperature = cfg.fit.initial_temperature;
  s.quadrature_nodes = cfg.fit.quadrature_nodes;
  return s;
}

}  // namespace

ModelOutput cmd_model(const RunConfig& cfg) {
  ModelOutput out;
  out.g2.metadata = {{"gamma_MHz", format_number(angular_to_mhz(cfg.atom.gamma()))},
                     {"delta_MHz", format_number(angular_to_mhz(cfg.atom.delta()))},
                     {"saturation", format_number(cfg.atom.saturation())},
                     {"kappa_ext_MHz", format_number(angular_to_mhz(cfg.filter.kappa_ext))}};
  out.g2.columns = {"tau_ns", "g2_ideal", "g2_exp"};
  for (double tau : grid(0.0, cfg.model.tau_max, cfg.model.tau_step)) {
    out.g2.rows.push_back({s_to_ns(tau), g2_ideal(tau, cfg.atom, cfg.filter),
                           g2_experimental(tau, cfg.atom, cfg.filter, cfg.detection)});
  }
  out.spectrum.metadata = {{"coherent_weight_unit", "photons/s"},
                           {"incoherent_density_unit", "photons/s per MHz"}};
  out.spectrum.columns = {"omega_MHz", "coherent_weight", "incoherent_density"};
  const double w = cfg.model.omega_max;
  for (double om : grid(-w, w, cfg.model.omega_step)) {
    // Snap the grid point nearest the laser line to exactly zero.
    if (std::abs(om) < 1e-6 * cfg.model.omega_step) om = 0.0;
    const auto sp = emission_spectrum(om, cfg.atom);
    out.spectrum.rows.push_back({angular_to_mhz(om), sp.coherent_weight, sp.incoherent_density * kTwoPi * 1e6});
  }
  return out;
}

CsvTable cmd_scan_kext(const RunConfig& cfg) {
  CsvTable t;
  t.metadata = {{"model", cfg.scan.ensemble ? "ensemble" : "single"},
                {"kappa0_MHz", format_number(angular_to_mhz(cfg.filter.kappa0))},
                {"dark_rate", format_number(cfg.detection.dark_rate)}};
  t.columns = {"kext_over_k0", "g2_zero", "rate_total", "rate_coh", "rate_inc"};
  const auto ratios = grid(cfg.scan.kext_min, cfg.scan.kext_max, cfg.scan.kext_step);
  FilterParams filter = cfg.filter;
  if (cfg.scan.ensemble) {
    const auto set = cfg.position_set();
    const auto drive = cfg.mot_drive();
    const double zero = 0.0;
    const auto pm = position_moments(set, cfg.trap, drive, std::span<const double>(&zero, 1));
    for (double r : ratios) {
      filter.kappa_ext = r * cfg.filter.kappa0;
      const auto in = combine_moments(pm, drift_moments(filter, cfg.drift), cfg.detection.eta);
      const double g = g2_from_ensemble(in, cfg.detection.dark_rate).front();
      t.rows.push_back({r, g, in.flux.total(), in.flux.coherent, in.flux.incoherent});
    }
  } else {
    for (double r : ratios) {
      filter.kappa_ext = r * cfg.filter.kappa0;
      const auto flux = mean_flux(cfg.atom, laser_transmission(filter), cfg.detection.eta);
      t.rows.push_back({r, g2_experimental(0.0, cfg.atom, filter, cfg.detection), flux.total(), flux.coherent,
                        flux.incoherent});
    }
  }
  return t;
}

G2Table simulation_target(const RunConfig& cfg) {
  G2Table tab;
  tab.tau = grid(0.0, cfg.simulate.table_span, cfg.simulate.table_step);
  DetectionParams det = cfg.detection;
  if (!cfg.simulate.background) det.dark_rate = 0.0;
  if (cfg.simulate.target == SimTarget::Single) {
    for (double tau : tab.tau) tab.g2.push_back(g2_experimental(tau, cfg.atom, cfg.filter, det));
  } else {
    const auto set = cfg.position_set();
    tab.g2 = ensemble_g2(tab.tau, set, cfg.trap, cfg.mot_drive(), cfg.filter, cfg.drift, det);
  }
  return tab;
}

TimetagStream cmd_simulate(const RunConfig& cfg) {
  GeneratorConfig gen;
  gen.mode = cfg.simulate.mode;
  gen.mean_rate = cfg.simulate.mean_rate;
  gen.dark_rate = cfg.simulate.dark_rate;
  gen.duration = cfg.simulate.duration;
  gen.seed = cfg.simulate.seed;
  gen.dead_time = cfg.simulate.dead_time;
  gen.g2_table = simulation_target(cfg);
  auto stream = generate_stream(gen);
  if (!cfg.simulate.split) return stream;
  const auto hbt = split_hbt(stream, cfg.split_seed);
  return merge_channels(hbt.ch0, hbt.ch1);
}

CorrelationHistogram cmd_correlate(const RunConfig& cfg, const TimetagStream& stream) {
  const auto ch0 = channel_times(stream, 0);
  const auto ch1 = channel_times(stream, 1);
  if (ch0.empty() || ch1.empty()) throw ConfigError("correlate needs events on both channels 0 and 1");
  CorrelateOptions opt;
  opt.bin_width_ps = cfg.correlate.bin_width_ps;
  opt.window_ps = cfg.correlate.window_ps;
  opt.duration = cfg.correlate.duration;
  return cross_correlate(ch0, ch1, opt);
}

CsvTable correlate_table(const RunConfig& cfg, const CorrelationHistogram& hist) {
  auto t = histogram_table(hist);
  t.metadata.emplace_back("kappa_ext_mhz", format_number(angular_to_mhz(cfg.filter.kappa_ext)));
  return t;
}

FitResult cmd_fit(const RunConfig& cfg, const std::vector<CsvTable>& inputs) {
  if (inputs.empty()) throw ConfigError("fit needs at least one input file");
  switch (cfg.fit.kind) {
    case FitKind::Kappa0: {
      std::vector<TransmissionPoint> pts;
      for (const auto& t : inputs) {
        const auto k = t.values("kext_mhz");
        const auto tr = t.values("transmission");
        for (std::size_t i = 0; i < k.size(); ++i) pts.push_back({mhz_to_angular(k[i]), tr[i]});
      }
      return fit_filter_kappa0(pts);
    }
    case FitKind::Baseline: {
      if (inputs.size() != 1) throw ConfigError("baseline fit takes exactly one histogram");
      const auto curve = normalize_g2(histogram_from_table(inputs.front()));
      return baseline_result(fit_baseline(curve, cfg.fit.tail_start), cfg.fit.tail_start);
    }
    case FitKind::Temperature: {
      if (inputs.size() != 1) throw ConfigError("temperature fit takes exactly one unfiltered g2 curve");
      auto data = g2_data_from_table(inputs.front(), cfg.fit.max_tau);
      data.baseline = cfg.fit.baseline;
      return fit_temperature_stark(data, temperature_setup(cfg));
    }
    case FitKind::Drift: {
      // Long format (kext_mhz, tau_ns, g2, g2_err) or histograms tagged with kappa_ext_mhz.
      std::map<double, G2Data> by_kext;
      for (const auto& t : inputs) {
        if (t.has_column("kext_mhz")) {
          const auto k = t.values("kext_mhz");
          const auto tau = t.values("tau_ns");
          const auto g = t.values("g2");
          const auto e = t.values("g2_err");
          for (std::size_t i = 0; i < k.size(); ++i) {
            if (std::abs(tau[i]) * 1e-9 > cfg.fit.max_tau) continue;
            auto& d = by_kext[k[i]];
            d.tau.push_back(ns_to_s(tau[i]));
            d.g2.push_back(g[i]);
            d.err.push_back(e[i]);
          }
        } else {
          const auto* k = t.meta("kappa_ext_mhz");
          if (!k) throw ConfigError("drift fit input lacks a kext_mhz column or kappa_ext_mhz metadata");
          by_kext[std::stod(*k)] = g2_data_from_table(t, cfg.fit.max_tau);
        }
      }
      std::vector<FilteredDataset> sets;
      for (auto& [k, d] : by_kext) {
        d.baseline = cfg.fit.baseline;
        sets.push_back({mhz_to_angular(k), std::move(d)});
      }
      DriftFitSetup s;
      s.drive = cfg.mot_drive();
      s.trap = cfg.trap;
      s.temperature = cfg.ensemble.temperature;
      s.kappa0 = cfg.filter.kappa0;
      s.detection = cfg.detection;
      s.initial_mean_offset = cfg.fit.initial_mean_offset;
      s.initial_sigma = cfg.fit.initial_sigma;
      s.drift_nodes = cfg.drift.nodes;
      s.quadrature_nodes = cfg.fit.quadrature_nodes;
      return fit_drift(sets, s);
    }
    case FitKind::Eta: {
      std::vector<RatePoint> pts;
      for (const auto& t : inputs) {
        const auto k = t.values("kext_mhz");
        const auto r = t.values("rate");
        const auto e = t.has_column("rate_err") ? t.values("rate_err") : std::vector<double>(k.size(), 0.0);
        for (std::size_t i = 0; i < k.size(); ++i) pts.push_back({mhz_to_angular(k[i]), r[i], e[i]});
      }
      EtaFitSetup s;
      s.drive = cfg.mot_drive();
      s.trap = cfg.trap;
      s.temperature = cfg.ensemble.temperature;
      s.kappa0 = cfg.filter.kappa0;
      s.drift = cfg.drift;
      s.quadrature_nodes = cfg.fit.quadrature_nodes;
      return fit_eta(pts, s);
    }
  }
  throw ConfigError("unknown fit kind");
}

json fit_result_json(const FitResult& r) {
  json j;
  j["kind"] = r.kind;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["residual_norm"] = number_or_null(r.residual_norm);
  j["chi2"] = number_or_null(r.chi2);
  j["dof"] = r.dof;
  j["reduced_chi2"] = r.dof > 0 ? number_or_null(r.reduced_chi2()) : json(nullptr);
  j["message"] = r.message;
  j["warnings"] = r.warnings;
  j["parameters"] = json::array();
  for (const auto& p : r.parameters) {
    const auto u = user_unit(p.unit);
    j["parameters"].push_back({{"name", p.name},
                               {"unit", u.name},
                               {"value", number_or_null(p.value * u.factor)},
                               {"sigma", number_or_null(p.sigma * u.factor)},
                               {"initial", number_or_null(p.initial * u.factor)}});
  }
  j["derived"] = json::array();
  for (const auto& d : r.derived) {
    const auto u = user_unit(d.unit);
    j["derived"].push_back({{"name", d.name},
                            {"unit", u.name},
                            {"value", number_or_null(d.value * u.factor)},
                            {"sigma", number_or_null(d.sigma * u.factor)}});
  }
  return j;
}

json pair_rate_json(const PairRate& p) {
  return {{"measured", number_or_null(p.measured)},
          {"measured_error", number_or_null(p.measured_error)},
          {"total", number_or_null(p.total)},
          {"total_error", number_or_null(p.total_error)},
          {"net_counts", number_or_null(p.net_counts)},
          {"base_level", number_or_null(p.base_level)},
          {"negative", p.negative}};
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

void reproduce(const RunConfig& base, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "config.json", base.effective);
  json summary;

  // Single-atom curves without the filter.
  RunConfig cfg = base;
  cfg.filter.kappa_ext = 0.0;
  const auto model = cmd_model(cfg);
  write_csv_file(dir / "model_g2.csv", model.g2);
  write_csv_file(dir / "model_spectrum.csv", model.spectrum);

  cfg = base;
  cfg.scan.ensemble = true;
  const auto scan = cmd_scan_kext(cfg);
  write_csv_file(dir / "scan_kext.csv", scan);
  std::size_t peak = 0;
  for (std::size_t i = 0; i < scan.rows.size(); ++i) {
    if (scan.rows[i][1] > scan.rows[peak][1]) peak = i;
  }
  summary["scan"] = {{"g2_zero_unfiltered", scan.rows.front()[1]},
                     {"peak_g2_zero", scan.rows[peak][1]},
                     {"peak_kext_over_k0", scan.rows[peak][0]}};

  // Unfiltered HBT measurement: antibunched ensemble target, renewal surrogate.
  cfg = base;
  cfg.filter.kappa_ext = 0.0;
  cfg.simulate.mode = GeneratorMode::Renewal;
  cfg.simulate.target = SimTarget::Ensemble;
  cfg.simulate.background = true;
  const auto unf_stream = cmd_simulate(cfg);
  write_ttg1_file(dir / "unfiltered.ttg1", unf_stream);
  const auto unf_hist = cmd_correlate(cfg, unf_stream);
  write_csv_file(dir / "unfiltered_hist.csv", correlate_table(cfg, unf_hist));
  const auto unf_curve = normalize_g2(unf_hist);
  const auto unf_zero = g2_zero(unf_curve);
  auto data = g2_data_from_curve(unf_curve, cfg.fit.max_tau);
  data.baseline = cfg.fit.baseline;
  const auto temp = fit_temperature_stark(data, temperature_setup(cfg));
  write_json_file(dir / "fit_temperature.json", fit_result_json(temp));
  summary["unfiltered"] = {{"events", unf_stream.size()},
                           {"g2_zero", unf_zero.value},
                           {"g2_zero_err", unf_zero.error},
                           {"target_g2_zero", simulation_target(cfg).g2.front()}};

  // Critically coupled filter: bunched single-atom target, pair-excess surrogate.
  cfg = base;
  cfg.filter.kappa_ext = cfg.filter.kappa0;
  cfg.filter.res_offset = 0.0;
  cfg.simulate.mode = GeneratorMode::PairExcess;
  cfg.simulate.target = SimTarget::Single;
  cfg.simulate.background = false;
  cfg.simulate.mean_rate = 1.0e4;
  cfg.simulate.duration = 100.0;
  cfg.simulate.table_span = 150e-9;
  const auto fil_stream = cmd_simulate(cfg);
  write_ttg1_file(dir / "filtered.ttg1", fil_stream);
  const auto fil_hist = cmd_correlate(cfg, fil_stream);
  write_csv_file(dir / "filtered_hist.csv", correlate_table(cfg, fil_hist));
  const auto fil_zero = g2_zero(normalize_g2(fil_hist));
  const auto pairs = pair_rate(fil_hist, 1.0);
  write_json_file(dir / "pair_rate.json", pair_rate_json(pairs));
  summary["filtered"] = {{"events", fil_stream.size()},
                         {"g2_zero", fil_zero.value},
                         {"g2_zero_err", fil_zero.error},
                         {"target_g2_zero", simulation_target(cfg).g2.front()}};
  write_json_file(dir / "summary.json", summary);
}

}  // namespace fluoro
