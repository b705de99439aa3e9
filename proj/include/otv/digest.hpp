#pragma once

#include <cstdint>
#include <cstring>

#include "otv/autograd.hpp"

namespace otv {

// FNV-1a over raw little-endian doubles. Used to pin frozen weights and
// to certify that probing leaves a cache untouched.
class Digest {
 public:
  void update(const void* data, size_t n) {
    const auto* b = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(const Matrix& m) {
    update(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
  }
  uint64_t value() const { return h_; }

 private:
  uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace otv
