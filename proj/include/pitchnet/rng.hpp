#ifndef PITCHNET_RNG_HPP
#define PITCHNET_RNG_HPP

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace pitchnet {

// std::uniform_*_distribution and std::shuffle are implementation-defined, so
// the draws below are derived from the raw engine output to keep runs
// reproducible across standard libraries.
using Engine = std::mt19937_64;

inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Unbiased integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <typename T>
void shuffle(std::vector<T>& v, Engine& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

inline std::string engine_state(const Engine& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Engine engine_from_state(const std::string& state) {
  Engine rng;
  std::istringstream is(state);
  is >> rng;
  return rng;
}

}  // namespace pitchnet

#endif  // PITCHNET_RNG_HPP
