#include "bodil/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace bodil {

namespace {

// Philox-4x32 round constants (multipliers and Weyl key increments).
constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(uint32_t c[4], uint32_t k0, uint32_t k1) {
  uint64_t p0 = uint64_t(kPhiloxM0) * c[0];
  uint64_t p1 = uint64_t(kPhiloxM1) * c[2];
  uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
  uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
  c[0] = hi1 ^ c[1] ^ k0;
  c[1] = lo1;
  c[2] = hi0 ^ c[3] ^ k1;
  c[3] = lo0;
}

inline void philox10(const uint32_t key[2], const uint32_t ctr[4], uint32_t out[4]) {
  uint32_t k0 = key[0], k1 = key[1];
  out[0] = ctr[0];
  out[1] = ctr[1];
  out[2] = ctr[2];
  out[3] = ctr[3];
  for (int r = 0; r < 10; r++) {
    philox_round(out, k0, k1);
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

} // namespace

RngStream::RngStream(uint64_t seed, StreamPurpose purpose, uint64_t index) {
  // The purpose folds into the key, the index into the counter block's high
  // words; distinct (seed, purpose, index) triples therefore map to distinct
  // Philox keyed sequences.
  uint64_t key = splitmix64(seed) ^ (0xA5A5A5A500000001ull * uint64_t(purpose));
  key_[0] = uint32_t(key);
  key_[1] = uint32_t(key >> 32);
  stream_[0] = uint32_t(index);
  stream_[1] = uint32_t(index >> 32);
}

void RngStream::refill() {
  uint32_t ctr[4] = {uint32_t(position_), uint32_t(position_ >> 32), stream_[0], stream_[1]};
  philox10(key_, ctr, buf_);
  position_++;
  avail_ = 4;
}

uint64_t RngStream::raw64() {
  if (avail_ < 2) refill();
  uint64_t hi = buf_[avail_ - 1];
  uint64_t lo = buf_[avail_ - 2];
  avail_ -= 2;
  return (hi << 32) | lo;
}

double RngStream::uniform() {
  return double(raw64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() {
  return double((raw64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = uniform_open();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  cached_normal_ = r * std::sin(a);
  has_cached_normal_ = true;
  return r * std::cos(a);
}

uint64_t RngStream::below(uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t r;
  do {
    r = raw64();
  } while (r >= limit);
  return r % n;
}

} // namespace bodil
