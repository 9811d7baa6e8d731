#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace samo {

/// Numeric table with a header row; values use '.' decimals and 17 significant digits.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a header column; throws ConfigError when absent.
  std::size_t column(const std::string& name) const;
};

/// Shortest-roundtrip-safe text for a double (%.17g style, locale independent).
std::string format_double(double v);

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace samo
