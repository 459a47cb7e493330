#include "fluoro/timetag_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fluoro/error.hpp"

namespace fluoro {
namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

std::uint64_t to_ps(double t) { return static_cast<std::uint64_t>(std::llround(t * 1e12)); }

void append_poisson(std::vector<double>& out, double rate, double t0, double t1, std::mt19937_64& rng) {
  if (!(rate > 0.0)) return;
  std::exponential_distribution<double> gap(rate);
  for (double t = t0 + gap(rng); t < t1; t += gap(rng)) out.push_back(t);
}

// Cumulative trapezoid of y over x.
std::vector<double> cumulative_trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> c(x.size(), 0.0);
  for (std::size_t k = 1; k < x.size(); ++k) c[k] = c[k - 1] + 0.5 * (y[k] + y[k - 1]) * (x[k] - x[k - 1]);
  return c;
}

// Inverse CDF of the piecewise-linear density y on grid x with cumulative c.
double sample_piecewise_linear(const std::vector<double>& x, const std::vector<double>& y,
                               const std::vector<double>& c, double u) {
  const double target = u * c.back();
  auto it = std::upper_bound(c.begin(), c.end(), target);
  std::size_t k = static_cast<std::size_t>(std::distance(c.begin(), it));
  if (k == 0) k = 1;
  if (k >= x.size()) k = x.size() - 1;
  const double h = x[k] - x[k - 1];
  const double y0 = y[k - 1];
  const double slope = (y[k] - y0) / h;
  const double need = target - c[k - 1];
  double s;
  if (std::abs(slope) * h < 1e-12 * std::max(y0, 1e-300)) {
    s = y0 > 0.0 ? need / y0 : 0.5 * h;
  } else {
    // y0 s + slope s^2 / 2 = need
    const double disc = std::max(0.0, y0 * y0 + 2.0 * slope * need);
    s = (std::sqrt(disc) - y0) / slope;
  }
  return x[k - 1] + std::clamp(s, 0.0, h);
}

TimetagStream to_stream(std::vector<double>& times) {
  std::sort(times.begin(), times.end());
  TimetagStream out;
  out.reserve(times.size());
  for (double t : times) out.push_back({to_ps(t), 0});
  return out;
}

}  // namespace

void G2Table::validate() const {
  if (tau.size() != g2.size()) throw DomainError("g2 table: tau and g2 sizes differ");
  if (tau.size() < 2) throw DomainError("g2 table needs at least two points");
  if (tau.front() != 0.0) throw DomainError("g2 table must start at tau = 0 (it is sampled on |tau|)");
  for (std::size_t k = 1; k < tau.size(); ++k) {
    if (!(tau[k] > tau[k - 1])) throw DomainError("g2 table tau grid must be strictly increasing");
  }
  for (double v : g2) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("g2 table values must be finite and >= 0");
  }
}

double G2Table::operator()(double t) const {
  const double a = std::abs(t);
  if (a >= tau.back()) return 1.0;
  auto it = std::upper_bound(tau.begin(), tau.end(), a);
  const std::size_t k = static_cast<std::size_t>(std::distance(tau.begin(), it));
  const double f = (a - tau[k - 1]) / (tau[k] - tau[k - 1]);
  return g2[k - 1] + f * (g2[k] - g2[k - 1]);
}

void GeneratorConfig::validate() const {
  if (!(mean_rate >= 0.0) || !(dark_rate >= 0.0)) throw DomainError("rates must be >= 0");
  if (!(duration > 0.0)) throw DomainError("duration must be positive");
  if (!(dead_time >= 0.0)) throw DomainError("dead time must be >= 0");
  g2_table.validate();
  if (mode == GeneratorMode::Renewal && mean_rate * g2_table.span() >= 0.1) {
    throw DomainError("renewal surrogate is biased: mean_rate * table span = " +
                      std::to_string(mean_rate * g2_table.span()) + " must be < 0.1");
  }
  if (mode == GeneratorMode::PairExcess) {
    for (std::size_t k = 0; k < g2_table.g2.size(); ++k) {
      if (g2_table.g2[k] < 1.0) {
        throw DomainError("pair-excess mode needs g2 >= 1 on the table; g2 = " +
                          std::to_string(g2_table.g2[k]) + " at tau = " +
                          std::to_string(g2_table.tau[k]) + " s");
      }
    }
  }
}

std::vector<double> PairExcessCalibration::implied_g2() const {
  const double nt = total_rate();
  std::vector<double> g(pdf.size(), 1.0);
  if (nt <= 0.0) return g;
  for (std::size_t k = 0; k < pdf.size(); ++k) g[k] = 1.0 + 2.0 * pair_rate * pdf[k] / (nt * nt);
  return g;
}

PairExcessCalibration calibrate_pair_excess(const GeneratorConfig& config) {
  config.validate();
  if (config.mode != GeneratorMode::PairExcess) throw DomainError("calibration applies to pair-excess mode");
  const auto& tab = config.g2_table;
  std::vector<double> excess(tab.g2.size());
  for (std::size_t k = 0; k < excess.size(); ++k) excess[k] = tab.g2[k] - 1.0;
  const auto cum = cumulative_trapezoid(tab.tau, excess);
  PairExcessCalibration cal;
  cal.excess_integral = 2.0 * cum.back();
  const double nt = config.mean_rate;
  cal.pair_rate = 0.5 * nt * nt * cal.excess_integral;
  cal.single_rate = nt - 2.0 * cal.pair_rate;
  if (cal.single_rate < 0.0) {
    throw DomainError("pair-excess calibration infeasible: singles rate " +
                      std::to_string(cal.single_rate) + " < 0 (reduce mean_rate below " +
                      std::to_string(1.0 / cal.excess_integral) + " /s)");
  }
  cal.pdf.assign(excess.size(), 0.0);
  if (cal.excess_integral > 0.0) {
    for (std::size_t k = 0; k < excess.size(); ++k) cal.pdf[k] = excess[k] / cal.excess_integral;
  }
  return cal;
}

TimetagStream generate_stream(const GeneratorConfig& config) {
  config.validate();
  auto rng = make_rng(config.seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> times;
  const double T = config.duration;
  const auto& tab = config.g2_table;

  if (config.mode == GeneratorMode::Renewal) {
    const double r = config.mean_rate;
    if (r > 0.0) {
      const double g_max = std::max(1.0, *std::max_element(tab.g2.begin(), tab.g2.end()));
      const double lambda_max = r * g_max;
      std::exponential_distribution<double> gap(lambda_max);
      bool have_last = false;
      double last = 0.0;
      for (double t = gap(rng); t < T; t += gap(rng)) {
        const double g = have_last ? tab(t - last) : 1.0;
        if (unit(rng) * g_max < g) {
          times.push_back(t);
          last = t;
          have_last = true;
        }
      }
    }
  } else {
    const auto cal = calibrate_pair_excess(config);
    std::vector<double> excess(tab.g2.size());
    for (std::size_t k = 0; k < excess.size(); ++k) excess[k] = tab.g2[k] - 1.0;
    const auto cum = cumulative_trapezoid(tab.tau, excess);
    const double span = tab.span();
    if (cal.pair_rate > 0.0) {
      std::vector<double> seeds;
      append_poisson(seeds, cal.pair_rate, -span, T + span, rng);
      for (double s : seeds) {
        const double delay = sample_piecewise_linear(tab.tau, excess, cum, unit(rng));
        const double second = unit(rng) < 0.5 ? s - delay : s + delay;
        if (s >= 0.0 && s < T) times.push_back(s);
        if (second >= 0.0 && second < T) times.push_back(second);
      }
    }
    append_poisson(times, cal.single_rate, 0.0, T, rng);
  }

  auto dark_rng = make_rng(config.seed, 1);
  append_poisson(times, config.dark_rate, 0.0, T, dark_rng);
  auto stream = to_stream(times);
  if (config.dead_time > 0.0) stream = apply_dead_time(stream, to_ps(config.dead_time));
  return stream;
}

HbtSplit split_hbt(const TimetagStream& stream, std::uint64_t seed) {
  if (!is_sorted_by_time(stream)) throw DomainError("split_hbt requires a time-sorted stream");
  auto rng = make_rng(seed, 2);
  HbtSplit out;
  out.ch0.reserve(stream.size() / 2 + 16);
  out.ch1.reserve(stream.size() / 2 + 16);
  for (const auto& rec : stream) {
    // One 64-bit draw per event; the top bit picks the output port.
    if (rng() >> 63) {
      out.ch1.push_back({rec.time_ps, 1});
    } else {
      out.ch0.push_back({rec.time_ps, 0});
    }
  }
  return out;
}

TimetagStream apply_dead_time(const TimetagStream& stream, std::uint64_t dead_time_ps) {
  TimetagStream out;
  out.reserve(stream.size());
  bool have = false;
  std::uint64_t last = 0;
  for (const auto& rec : stream) {
    if (have && rec.time_ps - last < dead_time_ps) continue;
    out.push_back(rec);
    last = rec.time_ps;
    have = true;
  }
  return out;
}

bool is_sorted_by_time(std::span<const TimetagRecord> stream) {
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (stream[i].time_ps < stream[i - 1].time_ps) return false;
  }
  return true;
}

std::vector<std::uint64_t> channel_times(std::span<const TimetagRecord> stream, std::uint8_t channel) {
  std::vector<std::uint64_t> t;
  for (const auto& r : stream) {
    if (r.channel == channel) t.push_back(r.time_ps);
  }
  return t;
}

std::vector<std::uint64_t> all_times(std::span<const TimetagRecord> stream) {
  std::vector<std::uint64_t> t;
  t.reserve(stream.size());
  for (const auto& r : stream) t.push_back(r.time_ps);
  return t;
}

TimetagStream merge_channels(std::span<const TimetagRecord> ch0, std::span<const TimetagRecord> ch1) {
  TimetagStream out;
  out.reserve(ch0.size() + ch1.size());
  std::size_t i = 0, j = 0;
  while (i < ch0.size() || j < ch1.size()) {
    if (j == ch1.size() || (i < ch0.size() && ch0[i].time_ps <= ch1[j].time_ps)) {
      out.push_back({ch0[i++].time_ps, 0});
    } else {
      out.push_back({ch1[j++].time_ps, 1});
    }
  }
  return out;
}

}  // namespace fluoro
