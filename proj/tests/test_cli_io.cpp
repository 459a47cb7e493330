#include <cmath>
#include <cstring>
#include <sstream>

#include "doctest.h"
#include "fluoro/commands.hpp"
#include "fluoro/config.hpp"
#include "fluoro/csv.hpp"
#include "fluoro/error.hpp"
#include "fluoro/ttg1.hpp"
#include "fluoro/units.hpp"

using namespace fluoro;

namespace {

std::string ttg1_bytes(const TimetagStream& s) {
  std::ostringstream out(std::ios::binary);
  write_ttg1(out, s);
  return out.str();
}

std::uint64_t format_offset(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  try {
    read_ttg1(in);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("no FormatError");
  return 0;
}

void put_u64(std::string& b, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[at + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

}  // namespace

TEST_CASE("TTG1 layout and round trip") {
  const TimetagStream s{{0, 0}, {5, 1}, {5, 0}, {1'000'000'000'000ULL, 1}};
  const auto bytes = ttg1_bytes(s);
  REQUIRE(bytes.size() == 16 + 16 * s.size());
  CHECK(bytes.substr(0, 4) == "TTG1");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(bytes[5] == 0);
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);  // 1 ps resolution
  // Record 1: time 5 little-endian, channel 1.
  CHECK(static_cast<unsigned char>(bytes[32]) == 5);
  CHECK(static_cast<unsigned char>(bytes[40]) == 1);
  std::istringstream in(bytes, std::ios::binary);
  CHECK(read_ttg1(in) == s);

  std::istringstream empty_in(ttg1_bytes({}), std::ios::binary);
  CHECK(read_ttg1(empty_in).empty());

  // Coarser resolution scales stored ticks to ps.
  auto coarse = bytes;
  put_u64(coarse, 8, 1000);
  std::istringstream cin(coarse, std::ios::binary);
  const auto scaled = read_ttg1(cin);
  CHECK(scaled[1].time_ps == 5000);

  // Streams longer than one read chunk.
  TimetagStream big;
  for (std::uint64_t i = 0; i < 10'000; ++i) big.push_back({i * 7, static_cast<std::uint8_t>(i % 2)});
  std::istringstream bin(ttg1_bytes(big), std::ios::binary);
  CHECK(read_ttg1(bin) == big);
}

TEST_CASE("TTG1 writer validation") {
  std::ostringstream out;
  CHECK_THROWS_AS(write_ttg1(out, TimetagStream{{5, 0}, {4, 0}}), DomainError);
  CHECK_THROWS_AS(write_ttg1(out, TimetagStream{{5, 2}}), DomainError);
}

TEST_CASE("TTG1 reader reports the offending byte offset") {
  const TimetagStream s{{10, 0}, {20, 1}, {30, 0}};
  const auto good = ttg1_bytes(s);

  auto magic = good;
  magic[1] = 'X';
  CHECK(format_offset(magic) == 0);
  CHECK(format_offset(good.substr(0, 10)) == 10);
  CHECK(format_offset(good.substr(0, 2)) == 2);
  auto version = good;
  version[4] = 2;
  CHECK(format_offset(version) == 4);
  auto reserved = good;
  reserved[7] = 1;
  CHECK(format_offset(reserved) == 6);
  auto resolution = good;
  put_u64(resolution, 8, 0);
  CHECK(format_offset(resolution) == 8);
  auto channel = good;
  channel[16 + 16 + 8] = 3;
  CHECK(format_offset(channel) == 40);
  auto pad = good;
  pad[16 + 12] = 1;
  CHECK(format_offset(pad) == 28);
  auto order = good;
  put_u64(order, 48, 15);
  CHECK(format_offset(order) == 48);
  CHECK(format_offset(good.substr(0, good.size() - 3)) == 48);
  CHECK(format_offset(good + std::string(5, '\0')) == 64);
}

TEST_CASE("CSV round trip and errors") {
  CsvTable t;
  t.metadata = {{"bin_width_ps", "1000"}, {"note", "a b"}};
  t.columns = {"x", "y"};
  t.rows = {{0.0, 1.25}, {-3.5e-9, 1.0 / 3.0}, {INFINITY, NAN}};
  std::ostringstream out;
  write_csv(out, t);
  const auto text = out.str();
  CHECK(text.rfind("# bin_width_ps=1000\n# note=a b\nx,y\n0,1.25\n", 0) == 0);
  std::istringstream in(text);
  const auto back = read_csv(in);
  CHECK(back.columns == t.columns);
  CHECK(back.metadata == t.metadata);
  REQUIRE(back.rows.size() == 3);
  CHECK(back.rows[1][0] == -3.5e-9);
  CHECK(back.rows[1][1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(std::isinf(back.rows[2][0]));
  CHECK(std::isnan(back.rows[2][1]));
  CHECK(*back.meta("note") == "a b");
  CHECK(back.meta("missing") == nullptr);
  CHECK(back.values("y")[0] == 1.25);
  CHECK_THROWS_AS(back.column("z"), FormatError);

  std::istringstream ragged("x,y\n1,2\n3\n");
  try {
    read_csv(ragged);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 3);
  }
  std::istringstream word("# k=v\nx\n1\nabc\n");
  try {
    read_csv(word);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }
  std::istringstream blank("# only=meta\n");
  CHECK_THROWS_AS(read_csv(blank), FormatError);
}

TEST_CASE("histogram table round trip") {
  CorrelationHistogram h;
  h.bin_width_ps = 1000;
  h.half_bins = 3;
  h.counts = {1, 0, 4, 9, 4, 0, 2};
  h.events0 = 1234;
  h.events1 = 987;
  h.duration = 2.5;
  const auto t = histogram_table(h);
  CHECK(t.rows.size() == 7);
  std::ostringstream out;
  write_csv(out, t);
  std::istringstream in(out.str());
  const auto back = histogram_from_table(read_csv(in));
  CHECK(back.counts == h.counts);
  CHECK(back.bin_width_ps == h.bin_width_ps);
  CHECK(back.half_bins == h.half_bins);
  CHECK(back.events0 == h.events0);
  CHECK(back.events1 == h.events1);
  CHECK(back.duration == h.duration);
  auto bad = t;
  bad.rows.pop_back();
  CHECK_THROWS_AS(histogram_from_table(bad), FormatError);
}

TEST_CASE("configuration loading") {
  const auto cfg = load_config(std::nullopt, {});
  CHECK(cfg.filter.kappa0 == doctest::Approx(units::mhz_to_angular(1.08)).epsilon(1e-15));
  CHECK(cfg.trap.depth == doctest::Approx(1.66e-3));
  CHECK(cfg.trap.waist == doctest::Approx(1.8e-6));
  CHECK(cfg.ensemble.temperature == doctest::Approx(144e-6));
  CHECK(cfg.atom.saturation() == doctest::Approx(0.025).epsilon(1e-14));
  CHECK(units::angular_to_mhz(cfg.atom.delta()) == doctest::Approx(-57.9));
  CHECK(units::angular_to_mhz(cfg.mot_detuning) == doctest::Approx(-16.3));
  CHECK(cfg.trap.stark_max > 0.0);
  CHECK(cfg.detection.eta == doctest::Approx(0.00136));
  CHECK(units::angular_to_mhz(cfg.mot_drive().delta()) == doctest::Approx(-16.3));
  CHECK(cfg.mot_drive().rabi() == cfg.atom.rabi());
  // The trap-centre Stark shift reproduces the configured mean detuning.
  CHECK(units::angular_to_mhz(mean_detuning(cfg.position_set(), cfg.trap, cfg.mot_drive())) ==
        doctest::Approx(-57.9).epsilon(1e-9));

  const auto o = load_config(std::nullopt, {"filter.kappa_ext_mhz=1.5", "ensemble.samples=100",
                                            "simulate.mode=\"pair_excess\"", "correlate.bin_ns=2"});
  CHECK(o.filter.kappa_ext == doctest::Approx(units::mhz_to_angular(1.5)));
  CHECK(o.ensemble.sample_count == 100);
  CHECK(o.simulate.mode == GeneratorMode::PairExcess);
  CHECK(o.correlate.bin_width_ps == 2000);
  CHECK(o.effective["filter"]["kappa_ext_mhz"] == 1.5);
  // Bare strings are accepted without JSON quotes.
  CHECK(load_config(std::nullopt, {"simulate.mode=renewal"}).simulate.mode == GeneratorMode::Renewal);

  const auto r = load_config(std::nullopt, {"atom.rabi_mhz=5.0"});
  CHECK(r.atom.saturation() ==
        doctest::Approx(saturation(units::mhz_to_angular(5.0), r.atom.gamma(), r.atom.delta())).epsilon(1e-14));
  CHECK_THROWS_AS(load_config(std::nullopt, {"atom.rabi_mhz=5.0", "atom.saturation=0.025"}), ConfigError);

  CHECK_THROWS_AS(load_config(std::nullopt, {"filter.kappa_zero=1"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"nosuch.key=1"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"ensemble.samples=\"many\""}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"filter.kappa0_mhz=-1"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"simulate.mode=\"hawkes\""}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"missing_equals"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::filesystem::path("/nonexistent/cfg.json"), {}), std::exception);
}

TEST_CASE("fit result JSON uses user units") {
  FitResult r;
  r.kind = "temperature_stark";
  r.parameters.push_back({"temperature", "K", 144e-6, 47e-6, 100e-6});
  r.parameters.push_back({"stark_max", "rad/s", units::mhz_to_angular(40.0), INFINITY, 0.0});
  r.dof = 0;
  r.converged = true;
  const auto j = fit_result_json(r);
  CHECK(j["parameters"][0]["unit"] == "uK");
  CHECK(j["parameters"][0]["value"].get<double>() == doctest::Approx(144.0));
  CHECK(j["parameters"][1]["unit"] == "MHz");
  CHECK(j["parameters"][1]["value"].get<double>() == doctest::Approx(40.0));
  CHECK(j["parameters"][1]["sigma"].is_null());
  CHECK(j["reduced_chi2"].is_null());
  CHECK(j["converged"] == true);
}

TEST_CASE("commands are deterministic") {
  auto cfg = load_config(std::nullopt, {"simulate.duration_s=0.05", "simulate.mean_rate=1e5",
                                        "ensemble.samples=200", "scan.kext_step=0.5"});
  const auto a = cmd_simulate(cfg);
  const auto b = cmd_simulate(cfg);
  CHECK(a == b);
  CHECK(is_sorted_by_time(a));
  CHECK(!a.empty());
  const auto ha = cmd_correlate(cfg, a);
  std::ostringstream x, y;
  write_csv(x, correlate_table(cfg, ha));
  write_csv(y, correlate_table(cfg, cmd_correlate(cfg, b)));
  CHECK(x.str() == y.str());

  std::ostringstream s1, s2;
  write_csv(s1, cmd_scan_kext(cfg));
  write_csv(s2, cmd_scan_kext(cfg));
  CHECK(s1.str() == s2.str());

  const auto m = cmd_model(cfg);
  CHECK(m.g2.columns == std::vector<std::string>{"tau_ns", "g2_ideal", "g2_exp"});
  CHECK(m.g2.rows.size() == 1001);
  CHECK(m.spectrum.has_column("incoherent_density"));
}
