#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <vector>

namespace stylegen {

using Rng = std::mt19937_64;

// Independent stream for (seed, tags...). Streams for different tag tuples
// are decorrelated through std::seed_seq, so parallel work can key its rng
// on e.g. a song id or a training step without sharing state.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (std::uint64_t t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream tags, kept in one place so no two subsystems collide.
namespace stream {
inline constexpr std::uint64_t kStyle = 0x5354594c;
inline constexpr std::uint64_t kSong = 0x534f4e47;
inline constexpr std::uint64_t kProjection = 0x50524f4a;
inline constexpr std::uint64_t kInit = 0x494e4954;
inline constexpr std::uint64_t kTrainStep = 0x53544550;
inline constexpr std::uint64_t kKmeans = 0x4b4d4e53;
inline constexpr std::uint64_t kEval = 0x4556414c;
inline constexpr std::uint64_t kInvert = 0x494e5654;
inline constexpr std::uint64_t kGenerate = 0x47454e52;
}  // namespace stream

// Uniform integer in [lo, hi] by rejection, independent of the standard
// library's distribution implementation.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return lo + static_cast<std::int64_t>(rng());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return lo + static_cast<std::int64_t>(draw % span);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace stylegen
