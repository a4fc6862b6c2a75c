#pragma once

#include <cmath>
#include <cstdint>

namespace clab {

// Counter-based deterministic random numbers.
//
// Every draw is a pure function of (key, a, b, c), so trajectory j, cycle n,
// draw d always sees the same value no matter how work is scheduled across
// threads or how many other draws happened first.  The mixer is the
// splitmix64 finalizer chained over the counter words; it passes the usual
// avalanche checks and is more than enough for Monte Carlo use.

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// 64-bit hash of a key and a 3-word counter.
inline std::uint64_t counter_hash(std::uint64_t key, std::uint64_t a,
                                  std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = mix64(key ^ 0x243f6a8885a308d3ULL);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::uint64_t key, std::uint64_t a, std::uint64_t b,
                        std::uint64_t c) {
  return static_cast<double>(counter_hash(key, a, b, c) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two sub-draws of the same counter.
// Deterministic and platform-independent (unlike std::normal_distribution).
inline double normal01(std::uint64_t key, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
  // Two independent uniforms derived from disjoint sub-counters.
  double u1 = uniform01(key, a, b, 2 * c);
  double u2 = uniform01(key, a, b, 2 * c + 1);
  if (u1 <= 0.0) u1 = 0x1.0p-53;  // guard log(0)
  const double pi = 3.14159265358979323846;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
}

// Convenience handle: fixes (key, stream) and exposes an indexed draw
// sequence.  `stream` is typically (trajectory, cycle).
class CounterRng {
 public:
  CounterRng(std::uint64_t key, std::uint64_t stream_a, std::uint64_t stream_b)
      : key_(key), a_(stream_a), b_(stream_b) {}

  double uniform(std::uint64_t draw) const { return uniform01(key_, a_, b_, draw); }
  double normal(std::uint64_t draw) const { return normal01(key_, a_, b_, draw); }
  std::uint64_t bits(std::uint64_t draw) const { return counter_hash(key_, a_, b_, draw); }

 private:
  std::uint64_t key_, a_, b_;
};

}  // namespace clab
