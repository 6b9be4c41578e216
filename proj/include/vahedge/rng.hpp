#pragma once

#include <cstdint>
#include <random>

namespace vahedge {

// Every random draw in the library comes from an engine keyed by
// (global seed, scenario index, purpose). Two streams with different keys
// are statistically independent; equal keys replay bit-identically.
enum class StreamPurpose : std::uint64_t {
  kMarket = 1,
  kMortality = 2,
  kAction = 3,
  kOracle = 4,
  kInit = 5,
  kDeltaSurface = 6,
  kEvaluation = 7,
  kTraining = 8,
  kOnline = 9,
};

using Engine = std::mt19937_64;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, StreamPurpose purpose);

inline Engine make_engine(std::uint64_t seed, std::uint64_t index, StreamPurpose purpose) {
  return Engine(derive_seed(seed, index, purpose));
}

}  // namespace vahedge
