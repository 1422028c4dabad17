#pragma once

#include <cstdint>
#include <random>

namespace hfedms {

using Rng = std::mt19937_64;

// Independent RNG streams. Every random draw in the simulator is keyed by a
// tag plus up to three integers, so results never depend on call order.
enum class StreamTag : std::uint64_t {
  ModelInit = 1,
  Population = 2,
  Batch = 3,
  Train = 4,
  Grouping = 5,
  Selection = 6,
  CsvPool = 7,
  ClusterInit = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
  return Rng(derive_seed(seed, tag, a, b, c));
}

}  // namespace hfedms
