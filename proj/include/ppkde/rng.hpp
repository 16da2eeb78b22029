#pragma once

#include <cstdint>
#include <random>

namespace ppkde {

//! Coordinates of one independent random stream. Every draw in an experiment
//! belongs to exactly one key, so results never depend on scheduling.
struct StreamKey
{
  std::uint64_t seed = 0;
  std::uint64_t outer = 0;
  std::uint64_t replication = 0;
  std::uint64_t subset = 0;
};

//! Generator seeded from all four key fields through std::seed_seq.
std::mt19937_64 make_stream(const StreamKey& key);

} // namespace ppkde
