#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace dfs {

// One step of the SplitMix64 generator (Steele, Lea, Flood 2014).
inline uint64_t splitmix64_next(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Hashes (seed, path words) into a stream seed. Streams keyed by distinct
// paths are statistically independent, so tensors, trials, layers, heads
// and steps can each own a stream whose output does not depend on the
// order in which other streams are consumed.
inline uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t s = seed;
  (void)splitmix64_next(s);
  for (uint64_t word : path) {
    s ^= word + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
    (void)splitmix64_next(s);
  }
  return s;
}

// Deterministic random stream: SplitMix64 for integers, Box-Muller for
// Gaussians. Same seed, same sequence, on every platform.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed) : state_(seed) {}

  static RandomStream derived(uint64_t seed, std::initializer_list<uint64_t> path) {
    return RandomStream(derive_seed(seed, path));
  }

  uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform in [0, 1), 53 significant bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_unit_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via the Box-Muller transform; the second variate of
  // each pair is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit_open();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Uniform integer in [0, bound) by rejection; bound > 0.
  uint64_t next_below(uint64_t bound) {
    const uint64_t limit = bound * (UINT64_MAX / bound);
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dfs
