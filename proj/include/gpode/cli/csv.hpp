#pragma once

#include <string>
#include <variant>
#include <vector>

namespace gpode::cli {

// Numbers render as the shortest decimal that parses back to the same double.
std::string number(double v);

using Cell = std::variant<std::string, double>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  std::string str() const;
  void write(const std::string& path) const;
  // Cells that parse completely as numbers become doubles.
  static Table parse(const std::string& text);
  static Table read(const std::string& path);
};

}  // namespace gpode::cli
