#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace stylegen {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string to_text() const;  // right-aligned columns, header underlined
  std::string to_csv() const;   // header row first
};

// Fixed six-decimal formatting so that report bytes are stable.
std::string fmt(double v);

// Writes <stem>.txt and <stem>.csv.
void write_table(const Table& table, const std::filesystem::path& stem);

}  // namespace stylegen
