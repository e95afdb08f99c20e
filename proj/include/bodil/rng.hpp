#pragma once

#include <cstdint>

namespace bodil {

// Counter-based random number generation (Philox-4x32, 10 rounds).
//
// A stream is identified by (seed, purpose, index). The purpose tag keeps
// unrelated consumers (data noise, sampler proposals, ...) on disjoint
// streams even when they share a seed, and the index separates parallel
// units of work such as chains or inner solves. Draws advance a 64-bit
// position counter, so the value sequence of a stream depends only on its
// identity and position, never on thread scheduling or evaluation order.
enum class StreamPurpose : uint32_t {
  DataNoise = 1,       // synthetic measurement noise
  MediumSynthesis = 2, // random diffusivity media / phantom tissue maps
  InitNoise = 3,       // optimizer initialization jitter
  HmcMomentum = 4,
  HmcAccept = 5,
  BasisPrior = 6,      // stage-0 prior draws
  BasisResample = 7,
  BasisChain = 8,      // per-chain proposal/accept draws; index = stage<<32 | chain
  Scratch = 99,
};

class RngStream {
public:
  RngStream(uint64_t seed, StreamPurpose purpose, uint64_t index = 0);

  uint64_t raw64();

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();
  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_open();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (pairs cached).
  double normal();
  // Integer in [0, n), by rejection (exact, unbiased).
  uint64_t below(uint64_t n);

private:
  void refill();

  uint32_t key_[2];
  uint32_t stream_[2];
  uint64_t position_ = 0;
  uint32_t buf_[4];
  int avail_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

} // namespace bodil
