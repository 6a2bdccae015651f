#include "gpode/systems/trajectory.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gpode/error.hpp"

namespace gpode::systems {
namespace {

void put(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double take(std::string_view field, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw IoError("csv line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(',', pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

void Trajectory::push(double t, std::span<const double> y) {
  if (dim == 0) dim = y.size();
  if (y.size() != dim) throw DimensionError("trajectory row of dimension " + std::to_string(y.size()));
  times.push_back(t);
  values.insert(values.end(), y.begin(), y.end());
}

void Trajectory::validate() const {
  if (values.size() != times.size() * dim) throw DimensionError("trajectory values do not match times x dim");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) throw ContractError("non-finite observation time");
    if (i > 0 && !(times[i] > times[i - 1]))
      throw ContractError("observation times must be strictly increasing (index " + std::to_string(i) + ")");
  }
  for (double v : values)
    if (!std::isfinite(v)) throw ContractError("non-finite observation value");
}

std::string to_csv(const Trajectory& traj) {
  std::string out = "t";
  for (std::size_t d = 0; d < traj.dim; ++d) out += ",x" + std::to_string(d + 1);
  out += '\n';
  for (std::size_t i = 0; i < traj.size(); ++i) {
    put(out, traj.times[i]);
    for (double v : traj.row(i)) {
      out += ',';
      put(out, v);
    }
    out += '\n';
  }
  return out;
}

Trajectory from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("csv: missing header");
  auto header = split(line);
  if (header.size() < 2 || header[0] != "t") throw IoError("csv: header must be t,x1,...");
  Trajectory traj;
  traj.dim = header.size() - 1;
  std::size_t lineno = 1;
  std::vector<double> row(traj.dim);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != header.size())
      throw IoError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
    for (std::size_t d = 0; d < traj.dim; ++d) row[d] = take(fields[d + 1], lineno);
    traj.push(take(fields[0], lineno), row);
  }
  return traj;
}

void write_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << to_csv(traj);
  if (!out) throw IoError("write failed: " + path);
}

Trajectory read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

}  // namespace gpode::systems
