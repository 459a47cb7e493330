#pragma once

// Plain numeric CSV with optional "# key=value" metadata lines before the
// header. Numbers are written with %.12g so reruns are byte-identical.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fluoro/correlator.hpp"

namespace fluoro {

struct CsvTable {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws FormatError when absent
  bool has_column(const std::string& name) const;
  std::vector<double> values(const std::string& name) const;
  const std::string* meta(const std::string& key) const;
};

std::string format_number(double v);

void write_csv(std::ostream& out, const CsvTable& table);
void write_csv_file(const std::filesystem::path& path, const CsvTable& table);
// Throws FormatError with the 1-based line number of the first bad line.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

// Columns tau_ns, g2, g2_err, counts, with the histogram metadata needed to
// rebuild it.
CsvTable histogram_table(const CorrelationHistogram& hist);
CorrelationHistogram histogram_from_table(const CsvTable& table);

}  // namespace fluoro
