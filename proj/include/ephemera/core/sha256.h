#pragma once

#include <span>

#include "ephemera/core/bytes.h"

namespace ephemera {

Hash32 sha256(std::span<const std::uint8_t> data);

// Incremental variant for hashing concatenations without building the buffer.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> data);
  Hash32 finish();

 private:
  void* ctx_;
};

}  // namespace ephemera
