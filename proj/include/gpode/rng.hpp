#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gpode {

using Rng = std::mt19937_64;

// n i.i.d. standard normals. A fresh distribution object is used per call so the
// engine state alone determines future draws.
inline std::vector<double> standard_normals(Rng& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

// Independent engine for a named purpose, derived from a run seed.
inline Rng substream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

}  // namespace gpode
