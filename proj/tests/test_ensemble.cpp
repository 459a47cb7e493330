#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fluoro/ensemble.hpp"
#include "fluoro/error.hpp"
#include "fluoro/quadrature.hpp"
#include "fluoro/units.hpp"

using namespace fluoro;
using units::mhz_to_angular;

namespace {

const double kGamma = units::kDefaultGamma;
const double kMot = mhz_to_angular(-16.3);
const double kMean = mhz_to_angular(-57.9);

AtomDriveParams default_drive() {
  const double rabi = rabi_from_saturation(0.025, kGamma, kMean);
  return AtomDriveParams::from_rabi(kGamma, kMot, rabi);
}

TrapParams default_trap(const std::vector<Position>& samples) {
  TrapParams trap;
  trap.stark_max = 0.0;
  const auto set = equal_weights(samples);
  trap.stark_max = stark_max_for_mean_detuning(set, trap, kMot, kMean);
  return trap;
}

std::vector<Position> default_samples(int n = 4000, std::uint64_t seed = 1) {
  TrapParams trap;
  ThermalEnsemble ens;
  ens.temperature = 144e-6;
  ens.sample_count = n;
  ens.seed = seed;
  return sample_positions(trap, ens);
}

// Dense midpoint-rule Boltzmann average of I/I0 over the thermal support.
double oracle_mean_intensity(const TrapParams& trap, double temperature) {
  const auto box = thermal_support(trap, temperature);
  const int nr = 1500, nz = 1500;
  const double dr = box.radius / nr, dz = box.half_length / nz;
  const double u0 = trap.depth / temperature;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < nr; ++i) {
    const double r = (i + 0.5) * dr;
    for (int j = 0; j < nz; ++j) {
      const double z = (j + 0.5) * dz;
      const double in = trap.relative_intensity({r, 0.0, z});
      const double w = r * std::exp(u0 * (in - 1.0));
      num += w * in;
      den += w;
    }
  }
  return num / den;
}

}  // namespace

TEST_CASE("gauss-hermite rule for a standard normal") {
  for (int order : {1, 2, 5, 21, 40}) {
    const auto rule = gauss_hermite_normal(order);
    const double w = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
    CHECK(w == doctest::Approx(1.0).epsilon(1e-13));
    double m1 = 0.0, m2 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      m1 += rule.weights[i] * rule.nodes[i];
      m2 += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
      m4 += rule.weights[i] * std::pow(rule.nodes[i], 4);
    }
    CHECK(std::abs(m1) < 1e-13);
    if (order >= 2) CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
    if (order >= 3) CHECK(m4 == doctest::Approx(3.0).epsilon(1e-11));
  }
  const auto gl = gauss_legendre(10, 0.0, 2.0);
  double integral = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) integral += gl.weights[i] * std::pow(gl.nodes[i], 7);
  CHECK(integral == doctest::Approx(256.0 / 8.0).epsilon(1e-13));
}

TEST_CASE("thermal position sampling") {
  TrapParams trap;
  ThermalEnsemble cold;
  cold.temperature = 1e-10;
  cold.sample_count = 200;
  for (const auto& p : sample_positions(trap, cold)) {
    CHECK(std::hypot(p.x, p.y) < 1e-3 * trap.waist);
    CHECK(std::abs(p.z) < 1e-3 * trap.rayleigh_range());
  }

  const auto a = default_samples(20000, 9);
  double mean_i = 0.0;
  for (const auto& p : a) mean_i += trap.relative_intensity(p);
  mean_i /= static_cast<double>(a.size());
  // <U>/U0 = -<I/I0> for U = -U0 I/I0.
  const double oracle = oracle_mean_intensity(trap, 144e-6);
  CHECK(std::abs(mean_i - oracle) / oracle < 0.02);

  const auto b = default_samples(20000, 9);
  CHECK(a.size() == b.size());
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same &= a[i].x == b[i].x && a[i].y == b[i].y && a[i].z == b[i].z;
  CHECK(same);
  // Sample i depends only on (seed, i).
  const auto prefix = default_samples(500, 9);
  bool prefix_same = true;
  for (std::size_t i = 0; i < prefix.size(); ++i) prefix_same &= prefix[i].x == a[i].x && prefix[i].z == a[i].z;
  CHECK(prefix_same);

  ThermalEnsemble hot;
  hot.temperature = 2e-3;
  CHECK_THROWS_AS(sample_positions(trap, hot), DomainError);
  ThermalEnsemble empty;
  empty.sample_count = 0;
  CHECK_THROWS_AS(sample_positions(trap, empty), DomainError);
}

TEST_CASE("quadrature and Monte Carlo agree on the mean intensity") {
  TrapParams trap;
  const auto set = thermal_quadrature(trap, 144e-6, 48, 48);
  double wsum = 0.0, acc = 0.0;
  for (const auto& p : set) {
    wsum += p.weight;
    acc += p.weight * trap.relative_intensity(p.pos);
  }
  CHECK(acc / wsum == doctest::Approx(oracle_mean_intensity(trap, 144e-6)).epsilon(1e-4));
}

TEST_CASE("local drive parameters") {
  TrapParams trap;
  trap.stark_max = mhz_to_angular(50.0);
  const auto drive = default_drive();
  const auto centre = effective_params({0, 0, 0}, trap, drive);
  CHECK(centre.delta() == doctest::Approx(kMot - trap.stark_max).epsilon(1e-14));
  CHECK(centre.rabi() == drive.rabi());
  CHECK(centre.saturation() == doctest::Approx(saturation(drive.rabi(), kGamma, centre.delta())).epsilon(1e-14));
  const auto far = effective_params({20.0 * trap.waist, 0, 0}, trap, drive);
  CHECK(far.delta() == doctest::Approx(mhz_to_angular(-16.3)).epsilon(1e-12));

  const auto samples = default_samples();
  const auto ptrap = default_trap(samples);
  const auto set = equal_weights(samples);
  CHECK(units::angular_to_mhz(mean_detuning(set, ptrap, drive)) == doctest::Approx(-57.9).epsilon(1e-12));
  CHECK(ptrap.stark_max > 0.0);
}

TEST_CASE("degenerate ensemble equals the single-atom model") {
  TrapParams trap;
  trap.stark_max = mhz_to_angular(49.0);
  const auto drive = default_drive();
  const PositionSet one{{{0, 0, 0}, 1.0}};
  const auto local = effective_params({0, 0, 0}, trap, drive);
  const FilterParams filter{mhz_to_angular(1.08), mhz_to_angular(1.4), 0.0};
  DriftModel drift;
  drift.mean_offset = mhz_to_angular(-0.26);
  drift.sigma = 0.0;
  drift.nodes = 1;
  const DetectionParams det{0.00136, 120.0};
  FilterParams shifted = filter;
  shifted.res_offset = drift.mean_offset;
  const std::vector<double> taus{0.0, 2e-9, 15e-9, -40e-9};
  const auto g = ensemble_g2(taus, one, trap, drive, filter, drift, det);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    CHECK(g[k] == doctest::Approx(g2_experimental(taus[k], local, shifted, det)).epsilon(1e-12));
  }
}

TEST_CASE("factorized averages match the brute-force joint average") {
  const auto samples = default_samples(300, 4);
  const auto trap = default_trap(samples);
  const auto set = equal_weights(samples);
  const auto drive = default_drive();
  const FilterParams filter{mhz_to_angular(1.08), mhz_to_angular(1.7), 0.0};
  DriftModel drift;
  drift.mean_offset = mhz_to_angular(-0.26);
  drift.sigma = mhz_to_angular(1.92);
  drift.nodes = 15;
  std::vector<double> taus;
  for (int k = -20; k <= 20; ++k) taus.push_back(k * 2.5e-9);

  const auto ref = reference::joint_average(taus, set, trap, drive, filter, drift, 0.01);
  const auto pm = position_moments(set, trap, drive, taus);
  const auto fast = combine_moments(pm, drift_moments(filter, drift), 0.01);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    CHECK(fast.big_g2[k] == doctest::Approx(ref.big_g2[k]).epsilon(1e-11));
  }
  CHECK(fast.flux.coherent == doctest::Approx(ref.flux.coherent).epsilon(1e-12));
  CHECK(fast.flux.incoherent == doctest::Approx(ref.flux.incoherent).epsilon(1e-12));

  const auto serial = reference::position_moments(set, trap, drive, taus);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    CHECK(pm.a2_e2[k] == doctest::Approx(serial.a2_e2[k]).epsilon(1e-12));
    CHECK(std::abs(pm.a2_econj[k] - serial.a2_econj[k]) <= 1e-12 * std::abs(serial.a2_econj[k]));
  }
}

TEST_CASE("perfect-filter limit of the ensemble") {
  const auto samples = default_samples(2000, 2);
  const auto trap = default_trap(samples);
  const auto set = equal_weights(samples);
  const auto drive = default_drive();
  const FilterParams filter{mhz_to_angular(1.08), mhz_to_angular(1.08), 0.0};
  DriftModel drift;
  drift.nodes = 1;
  const double zero = 0.0;
  const double g = ensemble_g2(std::span<const double>(&zero, 1), set, trap, drive, filter, drift, {0.5, 0.0})[0];
  // <(gamma S)^2> / <gamma S^2>^2 over the samples.
  double a2 = 0.0, ninc = 0.0;
  for (const auto& p : samples) {
    const double s = effective_params(p, trap, drive).saturation();
    a2 += std::pow(kGamma * s, 2);
    ninc += kGamma * s * s;
  }
  const double n = static_cast<double>(samples.size());
  CHECK(g == doctest::Approx((a2 / n) / std::pow(ninc / n, 2)).epsilon(1e-10));
}

TEST_CASE("default parameter set") {
  const auto samples = default_samples();
  const auto trap = default_trap(samples);
  const auto set = equal_weights(samples);
  const auto drive = default_drive();
  DriftModel drift;
  drift.mean_offset = mhz_to_angular(-0.26);
  drift.sigma = mhz_to_angular(1.92);
  const DetectionParams det{0.00136, 120.0};
  const double k0 = mhz_to_angular(1.08);
  const double zero = 0.0;
  double best = 0.0, best_ratio = 0.0;
  for (int i = 0; i <= 60; ++i) {
    const double ratio = 0.05 * i;
    const FilterParams f{k0, ratio * k0, 0.0};
    const double g = ensemble_g2(std::span<const double>(&zero, 1), set, trap, drive, f, drift, det)[0];
    if (g > best) {
      best = g;
      best_ratio = ratio;
    }
  }
  const FilterParams at_k0{k0, k0, 0.0};
  const double g_k0 = ensemble_g2(std::span<const double>(&zero, 1), set, trap, drive, at_k0, drift, det)[0];
  CHECK(g_k0 > 4.0);
  CHECK(g_k0 < 12.0);
  CHECK(best_ratio > 1.0);
  CHECK(best > 5.5);
  CHECK(best < 9.5);
}

TEST_CASE("ensemble flux") {
  const auto samples = default_samples(1000, 3);
  const auto trap = default_trap(samples);
  const auto set = equal_weights(samples);
  const auto drive = default_drive();
  const double k0 = mhz_to_angular(1.08);
  DriftModel none;
  none.nodes = 1;
  const DetectionParams det{0.25, 0.0};
  double coh = 0.0, inc = 0.0;
  for (const auto& p : samples) {
    const auto a = effective_params(p, trap, drive);
    coh += coherent_rate(a.saturation(), kGamma);
    inc += incoherent_rate(a.saturation(), kGamma);
  }
  coh /= samples.size();
  inc /= samples.size();
  const auto open = ensemble_flux(set, trap, drive, {k0, 0.0, 0.0}, none, det);
  CHECK(open.total() == doctest::Approx(0.25 * (coh + inc)).epsilon(1e-12));
  const auto crit = ensemble_flux(set, trap, drive, {k0, k0, 0.0}, none, det);
  CHECK(crit.coherent < 1e-20);
  CHECK(crit.total() == doctest::Approx(0.25 * inc).epsilon(1e-12));
  DriftModel drift;
  drift.mean_offset = mhz_to_angular(0.4);
  drift.sigma = mhz_to_angular(1.92);
  for (double r : {0.3, 1.0, 2.2}) {
    const auto f = ensemble_flux(set, trap, drive, {k0, r * k0, 0.0}, drift, det);
    CHECK(f.coherent + f.incoherent == f.total());
    CHECK(f.coherent > 0.0);
  }
}

TEST_CASE("Monte Carlo convergence and determinism") {
  const auto small = default_samples(2000, 5);
  const auto large = default_samples(4000, 5);
  const auto trap = default_trap(large);
  const auto drive = default_drive();
  const FilterParams f{mhz_to_angular(1.08), mhz_to_angular(1.6), 0.0};
  DriftModel drift;
  drift.mean_offset = mhz_to_angular(-0.26);
  drift.sigma = mhz_to_angular(1.92);
  const DetectionParams det{0.00136, 120.0};
  const auto a = ensemble_g2_estimate(0.0, small, trap, drive, f, drift, det);
  const auto b = ensemble_g2_estimate(0.0, large, trap, drive, f, drift, det);
  CHECK(a.std_error > 0.0);
  CHECK(std::abs(a.value - b.value) < 1.96 * a.std_error);

  ThermalEnsemble ens;
  ens.sample_count = 1500;
  ens.seed = 77;
  const double g1 = ensemble_g2(3e-9, ens, trap, drive, f, drift, det);
  const double g2 = ensemble_g2(3e-9, ens, trap, drive, f, drift, det);
  CHECK(g1 == g2);
  const auto set = equal_weights(small);
  const double zero = 0.0;
  CHECK(ensemble_g2(std::span<const double>(&zero, 1), set, trap, drive, f, drift, det)[0] ==
        doctest::Approx(a.value).epsilon(1e-12));
}

TEST_CASE("intensities are averaged, not normalized g2") {
  const auto samples = default_samples(1000, 6);
  const auto trap = default_trap(samples);
  const auto set = equal_weights(samples);
  const auto drive = default_drive();
  const FilterParams f{mhz_to_angular(1.08), mhz_to_angular(1.08), 0.0};
  DriftModel drift;
  drift.nodes = 1;
  const DetectionParams det{0.00136, 0.0};
  const double zero = 0.0;
  const double g = ensemble_g2(std::span<const double>(&zero, 1), set, trap, drive, f, drift, det)[0];
  double pointwise = 0.0;
  for (const auto& p : samples) pointwise += g2_experimental(0.0, effective_params(p, trap, drive), f, det);
  pointwise /= samples.size();
  // Pointwise averaging of 1/S^2 overweights weakly driven atoms.
  CHECK(pointwise > 1.05 * g);
}

TEST_CASE("ensemble errors") {
  TrapParams trap;
  const auto drive = default_drive();
  const FilterParams f{mhz_to_angular(1.08), mhz_to_angular(1.08), 0.0};
  DriftModel drift;
  drift.nodes = 1;
  const PositionSet none;
  const double zero = 0.0;
  CHECK_THROWS_AS(ensemble_g2(std::span<const double>(&zero, 1), none, trap, drive, f, drift, {0.1, 0.0}),
                  DomainError);
  const auto dark = AtomDriveParams::from_rabi(kGamma, kMot, 0.0);
  const PositionSet one{{{0, 0, 0}, 1.0}};
  CHECK_THROWS_AS(ensemble_g2(std::span<const double>(&zero, 1), one, trap, dark, f, drift, {0.1, 0.0}),
                  DomainError);
  DriftModel bad;
  bad.sigma = -1.0;
  CHECK_THROWS_AS(drift_moments(f, bad), DomainError);
}
