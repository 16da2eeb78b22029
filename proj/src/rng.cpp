#include "ppkde/rng.hpp"

#include <array>

namespace ppkde {

std::mt19937_64 make_stream(const StreamKey& key)
{
  std::array<std::uint32_t, 9> words{};
  const std::array<std::uint64_t, 4> fields{ key.seed, key.outer,
                                             key.replication, key.subset };
  for (std::size_t i = 0; i < fields.size(); ++i) {
    words[2 * i] = static_cast<std::uint32_t>(fields[i]);
    words[2 * i + 1] = static_cast<std::uint32_t>(fields[i] >> 32);
  }
  words[8] = 0x70706b64u; // domain tag, keeps keys apart from plain seeds
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

} // namespace ppkde
