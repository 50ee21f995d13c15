#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dynpred {

// Minimal CSV support for the artifact's file schemas: comma separator,
// optional double-quote quoting, first row is the header. Empty cell = missing.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int n_cols() const { return static_cast<int>(header.size()); }
  int n_rows() const { return static_cast<int>(rows.size()); }
  std::optional<int> column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

void write_csv(const std::string& path, const CsvTable& table);
std::string format_csv(const CsvTable& table);

// shortest decimal string that round-trips the double exactly
std::string format_double(double v);

// strict double parse; returns nullopt for empty or non-numeric cells
std::optional<double> parse_double(const std::string& cell);

}  // namespace dynpred
