// fluoro: model, simulate and analyze filtered resonance fluorescence photon statistics.
//
// Exit codes: 0 success, 1 user error (bad config, corrupt input, fit failure), 2 internal error.

#include <omp.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fluoro/commands.hpp"
#include "fluoro/error.hpp"
#include "fluoro/ttg1.hpp"

namespace {

void apply_thread_cap() {
  const char* env = std::getenv("FLUORO_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw fluoro::ConfigError("FLUORO_THREADS must be a positive integer");
  omp_set_num_threads(static_cast<int>(n));
}

std::string fmt(double v) { return fluoro::format_number(v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon statistics of spectrally filtered resonance fluorescence"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "JSON configuration file (user units)");
  app.add_option("--set", sets, "Override a configuration value, e.g. --set filter.kappa_ext_mhz=1.2")
      ->take_all();

  std::string out_path, spectrum_path, in_path, fit_kind;
  std::vector<std::string> fit_inputs;
  std::optional<std::uint64_t> seed;
  std::optional<double> bin_ns, window_ns, duration_s;

  auto* model = app.add_subcommand("model", "g2(tau) and emission spectrum of a single atom");
  model->add_option("-o,--output", out_path, "g2 CSV (tau_ns, g2_ideal, g2_exp)")->required();
  model->add_option("--spectrum", spectrum_path, "spectrum CSV (omega_MHz, coherent_weight, incoherent_density)");

  auto* scan = app.add_subcommand("scan-kext", "g2(0) and detected rates versus filter coupling");
  scan->add_option("-o,--output", out_path, "CSV output")->required();

  auto* sim = app.add_subcommand("simulate", "synthetic HBT timetag stream (TTG1)");
  sim->add_option("-o,--output", out_path, "TTG1 output")->required();
  sim->add_option("--seed", seed, "generator seed (simulate.seed)");

  auto* corr = app.add_subcommand("correlate", "coincidence histogram of a two-channel TTG1 stream");
  corr->add_option("-i,--input", in_path, "TTG1 input")->required();
  corr->add_option("-o,--output", out_path, "histogram CSV (tau_ns, g2, g2_err, counts)")->required();
  corr->add_option("--bin-ns", bin_ns, "bin width in ns");
  corr->add_option("--window-ns", window_ns, "half window in ns");
  corr->add_option("--duration", duration_s, "acquisition time in s (default: stream span)");

  auto* fit = app.add_subcommand("fit", "fit a model to CSV data and write the result as JSON");
  fit->add_option("--kind", fit_kind, "kappa0 | baseline | temperature | drift | eta");
  fit->add_option("-i,--input", fit_inputs, "input CSV file(s)")->required()->take_all();
  fit->add_option("-o,--output", out_path, "FitResult JSON")->required();

  auto* rep = app.add_subcommand("reproduce", "run the model, scan, simulation and fit pipeline");
  rep->add_option("-o,--output", out_path, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    apply_thread_cap();
    if (seed) sets.push_back("simulate.seed=" + std::to_string(*seed));
    if (bin_ns) sets.push_back("correlate.bin_ns=" + fmt(*bin_ns));
    if (window_ns) sets.push_back("correlate.window_ns=" + fmt(*window_ns));
    if (duration_s) sets.push_back("correlate.duration_s=" + fmt(*duration_s));
    if (!fit_kind.empty()) sets.push_back("fit.kind=\"" + fit_kind + "\"");
    std::optional<std::filesystem::path> file;
    if (!config_path.empty()) file = config_path;
    const auto cfg = fluoro::load_config(file, sets);

    if (*model) {
      const auto out = fluoro::cmd_model(cfg);
      fluoro::write_csv_file(out_path, out.g2);
      if (!spectrum_path.empty()) fluoro::write_csv_file(spectrum_path, out.spectrum);
    } else if (*scan) {
      fluoro::write_csv_file(out_path, fluoro::cmd_scan_kext(cfg));
    } else if (*sim) {
      fluoro::write_ttg1_file(out_path, fluoro::cmd_simulate(cfg));
    } else if (*corr) {
      const auto stream = fluoro::read_ttg1_file(in_path);
      const auto hist = fluoro::cmd_correlate(cfg, stream);
      fluoro::write_csv_file(out_path, fluoro::correlate_table(cfg, hist));
    } else if (*fit) {
      std::vector<fluoro::CsvTable> tables;
      for (const auto& p : fit_inputs) tables.push_back(fluoro::read_csv_file(p));
      const auto result = fluoro::cmd_fit(cfg, tables);
      fluoro::write_json_file(out_path, fluoro::fit_result_json(result));
      if (!result.converged) {
        std::cerr << "fluoro: fit did not converge: " << result.message << '\n';
        return 1;
      }
    } else if (*rep) {
      fluoro::reproduce(cfg, out_path);
    }
  } catch (const fluoro::FormatError& e) {
    std::cerr << "fluoro: invalid input: " << e.what() << '\n';
    return 1;
  } catch (const fluoro::ConfigError& e) {
    std::cerr << "fluoro: configuration error: " << e.what() << '\n';
    return 1;
  } catch (const fluoro::DomainError& e) {
    std::cerr << "fluoro: " << e.what() << '\n';
    return 1;
  } catch (const fluoro::IoError& e) {
    std::cerr << "fluoro: " << e.what() << '\n';
    return 1;
  } catch (const fluoro::FitError& e) {
    std::cerr << "fluoro: fit failed: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fluoro: internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
