#pragma once

#include <numbers>

// Internal frequencies are angular (rad/s), times are seconds. User-facing
// values are ordinary frequency in MHz plus ns/us/um/uK; conversion happens
// once, at configuration load.
namespace fluoro::units {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kBoltzmann = 1.380649e-23;  // J/K

constexpr double mhz_to_angular(double mhz) { return kTwoPi * mhz * 1e6; }
constexpr double angular_to_mhz(double w) { return w / (kTwoPi * 1e6); }
constexpr double ns_to_s(double ns) { return ns * 1e-9; }
constexpr double s_to_ns(double s) { return s * 1e9; }
constexpr double us_to_s(double us) { return us * 1e-6; }
constexpr double um_to_m(double um) { return um * 1e-6; }
constexpr double nm_to_m(double nm) { return nm * 1e-9; }
constexpr double uk_to_k(double uk) { return uk * 1e-6; }
constexpr double k_to_uk(double k) { return k * 1e6; }
constexpr double mk_to_k(double mk) { return mk * 1e-3; }

// Amplitude decay rate of the 85Rb D2 excited-state dipole, gamma/2pi = 3.033 MHz.
// Literature value; not stated alongside the measurements it is used with.
inline constexpr double kDefaultGamma = mhz_to_angular(3.033);

}  // namespace fluoro::units
