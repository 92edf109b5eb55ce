#pragma once

#include <cstdint>
#include <random>

namespace mkofl {

using Rng = std::mt19937_64;

// Independent substreams hanging off one master seed. Each consumer owns a
// stream keyed by (tag, index), so results never depend on the order in which
// nodes or trials are processed.
enum class Stream : std::uint64_t {
  kDictionary = 1,
  kData = 2,
  kNode = 3,
  kServer = 4,
  kTrial = 5,
  kSynthetic = 6,
};

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0);

Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0);

}  // namespace mkofl
