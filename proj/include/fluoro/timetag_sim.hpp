#pragma once

// Synthetic photon-detection streams whose second-order statistics follow a
// tabulated target g2(tau). Two surrogate processes:
//
//  * Renewal: after every event the conditional intensity is R g2(t - t_last).
//    Valid for antibunched light at rates where R tau_span << 1.
//  * PairExcess: Poisson pair seeds at rate r_p with relative delay pdf
//    p(tau) ~ g2(tau) - 1, plus Poisson singles at rate r_s. The coincidence
//    density is then n_t^2 (1 + 2 r_p p(tau) / n_t^2), n_t = 2 r_p + r_s.
//
// Dark counts are an independent Poisson process in both modes.

#include <cstdint>
#include <utility>
#include <vector>

#include "fluoro/timetag.hpp"

namespace fluoro {

enum class GeneratorMode { Renewal, PairExcess };

// g2 sampled on |tau|: grid starts at 0 and is strictly increasing.
struct G2Table {
  std::vector<double> tau;  // s
  std::vector<double> g2;

  void validate() const;
  double span() const { return tau.empty() ? 0.0 : tau.back(); }
  // Linear interpolation in |tau|; 1 beyond the table.
  double operator()(double tau) const;
};

struct GeneratorConfig {
  GeneratorMode mode = GeneratorMode::PairExcess;
  double mean_rate = 1000.0;  // signal events/s
  double dark_rate = 0.0;     // events/s
  double duration = 1.0;      // s
  std::uint64_t seed = 1;
  G2Table g2_table;
  double dead_time = 0.0;     // s, applied to the merged output stream

  void validate() const;
};

struct PairExcessCalibration {
  double pair_rate = 0.0;    // r_p
  double single_rate = 0.0;  // r_s
  double excess_integral = 0.0;  // integral of (g2 - 1) over [-span, span], s
  // Normalized pair-delay pdf on the table grid (per second of signed delay).
  std::vector<double> pdf;
  // 1 + 2 r_p p(tau) / n_t^2 on the table grid.
  std::vector<double> implied_g2() const;
  double total_rate() const { return 2.0 * pair_rate + single_rate; }
};

PairExcessCalibration calibrate_pair_excess(const GeneratorConfig& config);

TimetagStream generate_stream(const GeneratorConfig& config);

struct HbtSplit {
  TimetagStream ch0;
  TimetagStream ch1;
};

// 50/50 beamsplitter: each event goes to channel 0 or 1 with probability 1/2.
HbtSplit split_hbt(const TimetagStream& stream, std::uint64_t seed);

// Drops events closer than dead_time_ps to the previous kept event.
TimetagStream apply_dead_time(const TimetagStream& stream, std::uint64_t dead_time_ps);

}  // namespace fluoro
