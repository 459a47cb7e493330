#include "fluoro/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fluoro/error.hpp"

namespace fluoro {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::uint64_t line) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  if (s == "nan") return NAN;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("not a number: '" + s + "'", line);
  return v;
}

std::int64_t meta_int(const CsvTable& t, const std::string& key) {
  const auto* v = t.meta(key);
  if (!v) throw FormatError("histogram CSV lacks metadata '" + key + "'", 1);
  return std::stoll(*v);
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw FormatError("CSV has no column '" + name + "'", 1);
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& c : columns) {
    if (c == name) return true;
  }
  return false;
}

std::vector<double> CsvTable::values(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r[c]);
  return v;
}

const std::string* CsvTable::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_csv(std::ostream& out, const CsvTable& table) {
  for (const auto& [k, v] : table.metadata) out << "# " << k << '=' << v << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
    out << '\n';
  }
}

void write_csv_file(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(out, table);
  if (!out) throw IoError("write failed: " + path.string());
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::uint64_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string::npos) t.metadata.emplace_back(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
      continue;
    }
    auto cells = split(line);
    if (!have_header) {
      t.columns = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw FormatError("expected " + std::to_string(t.columns.size()) + " fields, found " +
                            std::to_string(cells.size()),
                        lineno);
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_number(c, lineno));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw FormatError("CSV has no header line", lineno);
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

CsvTable histogram_table(const CorrelationHistogram& hist) {
  CsvTable t;
  t.metadata = {{"bin_width_ps", std::to_string(hist.bin_width_ps)},
                {"half_bins", std::to_string(hist.half_bins)},
                {"events0", std::to_string(hist.events0)},
                {"events1", std::to_string(hist.events1)},
                {"duration_s", format_number(hist.duration)}};
  t.columns = {"tau_ns", "g2", "g2_err", "counts"};
  const bool normalizable = hist.events0 > 0 && hist.events1 > 0 && hist.duration > 0.0;
  G2Curve curve;
  if (normalizable) curve = normalize_g2(hist);
  for (std::size_t k = 0; k < hist.counts.size(); ++k) {
    const double g = normalizable ? curve.g2[k] : 0.0;
    const double e = normalizable ? curve.err[k] : 0.0;
    t.rows.push_back({hist.tau(k) * 1e9, g, e, static_cast<double>(hist.counts[k])});
  }
  return t;
}

CorrelationHistogram histogram_from_table(const CsvTable& table) {
  CorrelationHistogram h;
  h.bin_width_ps = meta_int(table, "bin_width_ps");
  h.half_bins = meta_int(table, "half_bins");
  h.events0 = static_cast<std::uint64_t>(meta_int(table, "events0"));
  h.events1 = static_cast<std::uint64_t>(meta_int(table, "events1"));
  const auto* d = table.meta("duration_s");
  if (!d) throw FormatError("histogram CSV lacks metadata 'duration_s'", 1);
  h.duration = parse_number(*d, 1);
  const auto counts = table.values("counts");
  if (counts.size() != static_cast<std::size_t>(2 * h.half_bins + 1)) {
    throw FormatError("histogram CSV row count does not match half_bins", 1);
  }
  h.counts.reserve(counts.size());
  for (double c : counts) {
    if (!(c >= 0.0) || c != std::floor(c)) throw FormatError("histogram counts must be non-negative integers", 1);
    h.counts.push_back(static_cast<std::uint64_t>(c));
  }
  h.validate();
  return h;
}

}  // namespace fluoro
