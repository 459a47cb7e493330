#pragma once

// Hanbury Brown-Twiss coincidence analysis of two detector channels.
//
// Bin k covers tau = t1 - t0 in [k w - w/2, k w + w/2) for k in [-K, K]; a delay
// exactly on an edge goes to the upper bin.

#include <cstdint>
#include <span>
#include <vector>

namespace fluoro {

struct CorrelationHistogram {
  std::int64_t bin_width_ps = 1000;
  std::int64_t half_bins = 0;  // K; counts.size() == 2K + 1
  std::vector<std::uint64_t> counts;
  std::uint64_t events0 = 0;
  std::uint64_t events1 = 0;
  double duration = 0.0;  // s

  std::int64_t window_ps() const { return half_bins * bin_width_ps; }
  std::size_t center() const { return static_cast<std::size_t>(half_bins); }
  double tau(std::size_t index) const;  // bin centre, s
  double rate0() const { return duration > 0.0 ? events0 / duration : 0.0; }
  double rate1() const { return duration > 0.0 ? events1 / duration : 0.0; }
  std::uint64_t total() const;
  void validate() const;
};

struct CorrelateOptions {
  std::int64_t bin_width_ps = 1000;
  std::int64_t window_ps = 1'000'000;  // half-width; K = window / bin
  // Acquisition time in seconds; <= 0 uses the span of both streams.
  double duration = 0.0;
};

// Multi-stop coincidence histogram by a two-pointer sweep. Parallel over
// slices of ch0; integer counts make the result independent of thread count.
// Throws DomainError on unsorted input.
CorrelationHistogram cross_correlate(std::span<const std::uint64_t> ch0,
                                     std::span<const std::uint64_t> ch1,
                                     const CorrelateOptions& options);

namespace reference {
// Serial two-pointer sweep.
CorrelationHistogram cross_correlate(std::span<const std::uint64_t> ch0,
                                     std::span<const std::uint64_t> ch1,
                                     const CorrelateOptions& options);
}  // namespace reference

// Bin index of a delay; false when the delay falls outside the window.
bool delay_to_bin(std::int64_t delay_ps, std::int64_t bin_width_ps, std::int64_t half_bins,
                  std::int64_t& bin);

struct G2Curve {
  std::vector<double> tau;  // s
  std::vector<double> g2;
  std::vector<double> err;
  std::vector<std::uint64_t> counts;
  double bin_width = 0.0;  // s
  // Per-bin normalization r0 r1 T dtau; g2 = counts / norm.
  double norm = 0.0;

  // Infinite for empty bins.
  double relative_error(std::size_t k) const;
  // Poisson error with the zero-count floor max(counts, 1), used for weighting.
  double weight_error(std::size_t k) const;
};

// g2 = counts / (r0 r1 T dtau), error sqrt(counts) scaled the same way.
G2Curve normalize_g2(const CorrelationHistogram& hist);

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

// Inverse-variance weighted mean of bins with |tau_centre| <= window/2.
Estimate g2_zero(const G2Curve& curve, double window = 3e-9);

struct PairRateOptions {
  double pair_window = 100e-9;  // half-width
  double tail_min = 0.5e-6;     // accidental level from |tau| in [tail_min, tail_max]
  double tail_max = 1.0e-6;
};

struct PairRate {
  double measured = 0.0;        // detected pair rate n2_meas, 1/s
  double measured_error = 0.0;
  double total = 0.0;           // 2 n2_meas / eta^2
  double total_error = 0.0;
  double net_counts = 0.0;
  double base_level = 0.0;      // accidental counts per bin
  bool negative = false;        // net coincidences below the accidental level
};

double pair_rate_total(double measured, double eta);
PairRate pair_rate(const CorrelationHistogram& hist, double eta, const PairRateOptions& options = {});

// 1 + A exp(-|tau|/t_b) fitted over |tau| >= tail_start. The value 1 + A is the
// renormalized baseline for the short-delay model.
struct BaselineFit {
  double amplitude = 0.0;
  double amplitude_error = 0.0;
  double decay_time = 0.0;  // s
  double decay_time_error = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  int iterations = 0;
  bool converged = false;
  double baseline() const { return 1.0 + amplitude; }
};

// Throws FitError on non-convergence or when t_b falls below the bin width.
BaselineFit fit_baseline(const G2Curve& curve, double tail_start);

}  // namespace fluoro
