// Deterministic simulated time. Every component reads the same injected clock;
// nothing in the library touches the wall clock.
#pragma once

#include <cassert>
#include <cstdint>

namespace ephemera {

class SimClock {
 public:
  std::uint64_t now_ms() const { return now_ms_; }

  void advance_to(std::uint64_t t_ms) {
    assert(t_ms >= now_ms_ && "simulated time cannot move backwards");
    now_ms_ = t_ms;
  }

  void advance_by(std::uint64_t delta_ms) { now_ms_ += delta_ms; }

 private:
  std::uint64_t now_ms_ = 0;
};

class IdSource {
 public:
  std::uint64_t fresh() { return next_++; }

 private:
  std::uint64_t next_ = 1;
};

}  // namespace ephemera
