#pragma once

#include <cstdint>
#include <random>

namespace drsn {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent child seed for stream `stream` of a run seeded with `seed`.
// Children depend only on (seed, stream), never on the order they are drawn,
// so per-tree or per-epoch work can run in any order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ull));
}

// Well-known stream ids so that separate pipeline stages never share draws.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t shuffle = 3;
inline constexpr std::uint64_t noise = 4;
inline constexpr std::uint64_t synthetic = 5;
inline constexpr std::uint64_t forest = 6;
inline constexpr std::uint64_t threshold_init = 7;
}  // namespace stream

}  // namespace drsn
