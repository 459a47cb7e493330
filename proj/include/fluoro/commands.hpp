#pragma once

// Implementations behind the CLI subcommands. Each is a pure function of the
// configuration and its inputs so reruns produce identical files.

#include <filesystem>
#include <vector>

#include "fluoro/config.hpp"
#include "fluoro/correlator.hpp"
#include "fluoro/csv.hpp"
#include "fluoro/fitting.hpp"
#include "fluoro/timetag.hpp"
#include "json.hpp"

namespace fluoro {

struct ModelOutput {
  CsvTable g2;        // tau_ns, g2_ideal, g2_exp
  CsvTable spectrum;  // omega_MHz, coherent_weight, incoherent_density
};

ModelOutput cmd_model(const RunConfig& cfg);
// kext_over_k0, g2_zero, rate_total, rate_coh, rate_inc
CsvTable cmd_scan_kext(const RunConfig& cfg);

// Target g2 on |tau| in [0, table_span] for the generator.
G2Table simulation_target(const RunConfig& cfg);
TimetagStream cmd_simulate(const RunConfig& cfg);
CorrelationHistogram cmd_correlate(const RunConfig& cfg, const TimetagStream& stream);
CsvTable correlate_table(const RunConfig& cfg, const CorrelationHistogram& hist);

FitResult cmd_fit(const RunConfig& cfg, const std::vector<CsvTable>& inputs);

// Parameters reported in user units (MHz ordinary frequency, uK, us); non-finite
// numbers become null.
nlohmann::ordered_json fit_result_json(const FitResult& result);
nlohmann::ordered_json pair_rate_json(const PairRate& rate);

// Model g2 and spectrum, the g2(0) filter scan, simulated unfiltered and
// critically filtered HBT measurements with their analysis, into outdir.
void reproduce(const RunConfig& cfg, const std::filesystem::path& outdir);

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);

}  // namespace fluoro
