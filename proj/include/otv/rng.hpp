#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace otv {

// All randomness flows from one root seed through named substreams, so a
// single stage (data, init, sampling, eval) can be reproduced in isolation.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t stream_seed(uint64_t root, std::string_view stream,
                            uint64_t index = 0) {
  uint64_t h = root;
  for (char c : stream) h = splitmix64(h ^ static_cast<uint8_t>(c));
  return splitmix64(h ^ index);
}

inline std::mt19937_64 make_rng(uint64_t root, std::string_view stream,
                                uint64_t index = 0) {
  return std::mt19937_64(stream_seed(root, stream, index));
}

}  // namespace otv
