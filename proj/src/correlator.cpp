#include "fluoro/correlator.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fluoro/error.hpp"
#include "fluoro/optim.hpp"

namespace fluoro {
namespace {

struct DelayRange {
  std::int64_t lo;  // inclusive
  std::int64_t hi;  // exclusive
};

// Delays d with 2d in [-(2K+1)w, (2K+1)w).
DelayRange window_range(std::int64_t w, std::int64_t k) {
  const std::int64_t span2 = (2 * k + 1) * w;
  // ceil(span2 / 2) for positive span2
  const std::int64_t hi = (span2 + 1) / 2;
  const std::int64_t lo = -(span2 / 2);
  return {lo, hi};
}

void check_inputs(std::span<const std::uint64_t> ch0, std::span<const std::uint64_t> ch1,
                  const CorrelateOptions& opt) {
  if (opt.bin_width_ps <= 0) throw DomainError("bin width must be positive");
  if (opt.window_ps < 0) throw DomainError("window must be non-negative");
  auto check_sorted = [](std::span<const std::uint64_t> t, int ch) {
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (t[i] < t[i - 1]) {
        throw DomainError("channel " + std::to_string(ch) + " is not sorted at event " + std::to_string(i));
      }
    }
    if (!t.empty() && t.back() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw DomainError("timestamps exceed the signed 64-bit range");
    }
  };
  check_sorted(ch0, 0);
  check_sorted(ch1, 1);
}

CorrelationHistogram empty_histogram(std::span<const std::uint64_t> ch0, std::span<const std::uint64_t> ch1,
                                     const CorrelateOptions& opt) {
  CorrelationHistogram h;
  h.bin_width_ps = opt.bin_width_ps;
  h.half_bins = opt.window_ps / opt.bin_width_ps;
  h.counts.assign(static_cast<std::size_t>(2 * h.half_bins + 1), 0);
  h.events0 = ch0.size();
  h.events1 = ch1.size();
  if (opt.duration > 0.0) {
    h.duration = opt.duration;
  } else {
    std::uint64_t first = std::numeric_limits<std::uint64_t>::max(), last = 0;
    if (!ch0.empty()) {
      first = std::min(first, ch0.front());
      last = std::max(last, ch0.back());
    }
    if (!ch1.empty()) {
      first = std::min(first, ch1.front());
      last = std::max(last, ch1.back());
    }
    h.duration = last > first ? static_cast<double>(last - first) * 1e-12 : 0.0;
  }
  return h;
}

// Sweep ch0[begin, end) against ch1, adding into counts.
void sweep(std::span<const std::uint64_t> ch0, std::span<const std::uint64_t> ch1, std::size_t begin,
           std::size_t end, std::int64_t w, std::int64_t k, std::uint64_t* counts) {
  const DelayRange range = window_range(w, k);
  const auto* t1 = ch1.data();
  const std::size_t m = ch1.size();
  if (begin >= end) return;
  // First ch1 event that can pair with ch0[begin].
  const std::int64_t first_t0 = static_cast<std::int64_t>(ch0[begin]);
  std::size_t j = static_cast<std::size_t>(
      std::lower_bound(ch1.begin(), ch1.end(), first_t0 + range.lo,
                       [](std::uint64_t a, std::int64_t b) { return static_cast<std::int64_t>(a) < b; }) -
      ch1.begin());
  const std::int64_t two_w = 2 * w;
  const std::int64_t offset = 2 * k * w;  // keeps the bin numerator non-negative
  for (std::size_t i = begin; i < end; ++i) {
    const std::int64_t t0 = static_cast<std::int64_t>(ch0[i]);
    while (j < m && static_cast<std::int64_t>(t1[j]) - t0 < range.lo) ++j;
    for (std::size_t q = j; q < m; ++q) {
      const std::int64_t d = static_cast<std::int64_t>(t1[q]) - t0;
      if (d >= range.hi) break;
      // floor((2d + w) / 2w) + K, computed on a non-negative numerator.
      const std::int64_t idx = (2 * d + w + offset) / two_w;
      ++counts[idx];
    }
  }
}

}  // namespace

bool delay_to_bin(std::int64_t d, std::int64_t w, std::int64_t k, std::int64_t& bin) {
  const DelayRange range = window_range(w, k);
  if (d < range.lo || d >= range.hi) return false;
  const std::int64_t num = 2 * d + w;
  bin = num >= 0 ? num / (2 * w) : -((-num + 2 * w - 1) / (2 * w));
  return true;
}

double CorrelationHistogram::tau(std::size_t index) const {
  return static_cast<double>((static_cast<std::int64_t>(index) - half_bins) * bin_width_ps) * 1e-12;
}

std::uint64_t CorrelationHistogram::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

void CorrelationHistogram::validate() const {
  if (bin_width_ps <= 0) throw DomainError("histogram bin width must be positive");
  if (half_bins < 0 || counts.size() != static_cast<std::size_t>(2 * half_bins + 1)) {
    throw DomainError("histogram must have an odd bin count centred on tau = 0");
  }
}

CorrelationHistogram cross_correlate(std::span<const std::uint64_t> ch0, std::span<const std::uint64_t> ch1,
                                     const CorrelateOptions& opt) {
  check_inputs(ch0, ch1, opt);
  auto h = empty_histogram(ch0, ch1, opt);
  const std::size_t nbins = h.counts.size();
  const int threads = omp_get_max_threads();
  if (threads <= 1 || ch0.size() < 4096) {
    sweep(ch0, ch1, 0, ch0.size(), h.bin_width_ps, h.half_bins, h.counts.data());
    return h;
  }
  const std::size_t slices = static_cast<std::size_t>(threads) * 4;
  std::vector<std::uint64_t> partial(slices * nbins, 0);
  const std::size_t per = (ch0.size() + slices - 1) / slices;
#pragma omp parallel for schedule(dynamic, 1)
  for (long s = 0; s < static_cast<long>(slices); ++s) {
    const std::size_t begin = std::min(ch0.size(), static_cast<std::size_t>(s) * per);
    const std::size_t end = std::min(ch0.size(), begin + per);
    sweep(ch0, ch1, begin, end, h.bin_width_ps, h.half_bins, partial.data() + static_cast<std::size_t>(s) * nbins);
  }
  for (std::size_t s = 0; s < slices; ++s) {
    const auto* p = partial.data() + s * nbins;
    for (std::size_t b = 0; b < nbins; ++b) h.counts[b] += p[b];
  }
  return h;
}

namespace reference {

CorrelationHistogram cross_correlate(std::span<const std::uint64_t> ch0, std::span<const std::uint64_t> ch1,
                                     const CorrelateOptions& opt) {
  check_inputs(ch0, ch1, opt);
  auto h = empty_histogram(ch0, ch1, opt);
  sweep(ch0, ch1, 0, ch0.size(), h.bin_width_ps, h.half_bins, h.counts.data());
  return h;
}

}  // namespace reference

double G2Curve::relative_error(std::size_t k) const {
  if (counts[k] == 0) return std::numeric_limits<double>::infinity();
  return 1.0 / std::sqrt(static_cast<double>(counts[k]));
}

double G2Curve::weight_error(std::size_t k) const {
  return std::sqrt(static_cast<double>(std::max<std::uint64_t>(counts[k], 1))) / norm;
}

G2Curve normalize_g2(const CorrelationHistogram& hist) {
  hist.validate();
  if (!(hist.duration > 0.0)) throw DomainError("histogram duration must be positive");
  if (hist.events0 == 0 || hist.events1 == 0) throw DomainError("normalization needs non-zero rates on both channels");
  G2Curve c;
  c.bin_width = static_cast<double>(hist.bin_width_ps) * 1e-12;
  c.norm = hist.rate0() * hist.rate1() * hist.duration * c.bin_width;
  c.counts = hist.counts;
  const std::size_t n = hist.counts.size();
  c.tau.resize(n);
  c.g2.resize(n);
  c.err.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    c.tau[k] = hist.tau(k);
    const double counts = static_cast<double>(hist.counts[k]);
    c.g2[k] = counts / c.norm;
    c.err[k] = std::sqrt(counts) / c.norm;
  }
  return c;
}

Estimate g2_zero(const G2Curve& curve, double window) {
  const double half = 0.5 * window * (1.0 + 1e-9);
  double sw = 0.0, swx = 0.0;
  for (std::size_t k = 0; k < curve.tau.size(); ++k) {
    if (std::abs(curve.tau[k]) > half) continue;
    const double e = curve.weight_error(k);
    const double w = 1.0 / (e * e);
    sw += w;
    swx += w * curve.g2[k];
  }
  if (sw == 0.0) throw DomainError("g2_zero window contains no bins");
  return {swx / sw, 1.0 / std::sqrt(sw)};
}

double pair_rate_total(double measured, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("eta must lie in (0, 1]");
  return 2.0 * measured / (eta * eta);
}

PairRate pair_rate(const CorrelationHistogram& hist, double eta, const PairRateOptions& opt) {
  hist.validate();
  if (!(hist.duration > 0.0)) throw DomainError("pair rate needs a positive duration");
  const double w = static_cast<double>(hist.bin_width_ps) * 1e-12;
  const double window_edge = (static_cast<double>(hist.half_bins) + 0.5) * w;
  if (window_edge < opt.tail_max * (1.0 - 1e-9) || opt.pair_window > opt.tail_min) {
    throw DomainError("histogram window does not cover the accidental-level tail range");
  }
  double tail_sum = 0.0;
  std::size_t tail_bins = 0;
  double pair_sum = 0.0;
  std::size_t pair_bins = 0;
  for (std::size_t k = 0; k < hist.counts.size(); ++k) {
    const double t = std::abs(hist.tau(k));
    const double c = static_cast<double>(hist.counts[k]);
    if (t >= opt.tail_min * (1.0 - 1e-12) && t <= opt.tail_max * (1.0 + 1e-12)) {
      tail_sum += c;
      ++tail_bins;
    }
    if (t <= opt.pair_window * (1.0 + 1e-12)) {
      pair_sum += c;
      ++pair_bins;
    }
  }
  if (tail_bins == 0) throw DomainError("no bins in the accidental-level tail range");
  PairRate pr;
  pr.base_level = tail_sum / static_cast<double>(tail_bins);
  const double nb = static_cast<double>(pair_bins);
  pr.net_counts = pair_sum - nb * pr.base_level;
  const double var = pair_sum + nb * nb * tail_sum / (static_cast<double>(tail_bins) * tail_bins);
  pr.measured = pr.net_counts / hist.duration;
  pr.measured_error = std::sqrt(var) / hist.duration;
  pr.total = pair_rate_total(pr.measured, eta);
  pr.total_error = pair_rate_total(pr.measured_error, eta);
  pr.negative = pr.net_counts < 0.0;
  return pr;
}

BaselineFit fit_baseline(const G2Curve& curve, double tail_start) {
  std::vector<double> t, y, e;
  for (std::size_t k = 0; k < curve.tau.size(); ++k) {
    if (std::abs(curve.tau[k]) + 1e-18 < tail_start) continue;
    t.push_back(std::abs(curve.tau[k]));
    y.push_back(curve.g2[k]);
    e.push_back(curve.weight_error(k));
  }
  if (t.size() < 3) throw FitError("baseline fit needs at least 3 bins beyond tail_start");
  const double t_span = *std::max_element(t.begin(), t.end());

  // Initial guess from a log-linear fit of the positive excess.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int np = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double ex = y[i] - 1.0;
    if (ex <= 0.0) continue;
    const double ly = std::log(ex);
    sx += t[i];
    sy += ly;
    sxx += t[i] * t[i];
    sxy += t[i] * ly;
    ++np;
  }
  double a0 = 0.1, tb0 = t_span / 3.0;
  if (np >= 2) {
    const double slope = (np * sxy - sx * sy) / (np * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / np;
    if (slope < 0.0 && std::isfinite(slope)) {
      tb0 = -1.0 / slope;
      a0 = std::exp(icpt);
    }
  }
  tb0 = std::clamp(tb0, curve.bin_width, 10.0 * t_span);

  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(t.size()));
    const double tb = std::abs(p(1));
    for (std::size_t i = 0; i < t.size(); ++i) {
      r(static_cast<Eigen::Index>(i)) = (1.0 + p(0) * std::exp(-t[i] / tb) - y[i]) / e[i];
    }
    return r;
  };
  Eigen::VectorXd x0(2), scale(2);
  x0 << a0, tb0;
  scale << std::max(std::abs(a0), 1e-3), tb0;
  const auto res = least_squares(residuals, x0, scale);
  if (!res.converged) throw FitError("baseline fit did not converge: " + res.message);
  BaselineFit fit;
  fit.amplitude = res.x(0);
  fit.decay_time = std::abs(res.x(1));
  fit.amplitude_error = std::sqrt(res.covariance(0, 0));
  fit.decay_time_error = std::sqrt(res.covariance(1, 1));
  fit.chi2 = res.sum_squares;
  fit.dof = static_cast<int>(t.size()) - 2;
  fit.iterations = res.iterations;
  fit.converged = true;
  if (fit.decay_time < curve.bin_width) {
    throw FitError("baseline decay time " + std::to_string(fit.decay_time) +
                   " s is below the bin width and cannot be resolved");
  }
  return fit;
}

}  // namespace fluoro
