#include "gpode/cli/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gpode/error.hpp"

namespace gpode::cli {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string number(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string Table::str() const {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      if (const auto* s = std::get_if<std::string>(&row[i]))
        out += *s;
      else
        out += number(std::get<double>(row[i]));
    }
    out += '\n';
  }
  return out;
}

void Table::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << str();
  if (!out) throw IoError("write failed: " + path);
}

Table Table::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Table t;
  if (!std::getline(in, line)) throw IoError("csv: missing header");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<Cell> row;
    for (auto& cell : split(line)) {
      double v = 0.0;
      auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (!cell.empty() && r.ec == std::errc() && r.ptr == cell.data() + cell.size())
        row.emplace_back(v);
      else
        row.emplace_back(std::move(cell));
    }
    if (row.size() != t.header.size()) throw IoError("csv: row width differs from header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table Table::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace gpode::cli
