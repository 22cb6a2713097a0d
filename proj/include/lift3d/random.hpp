#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace lift3d {

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). Output depends only on (seed, stream,
// counter), so results are identical on every platform and independent
// streams can be handed to worker threads without coordination.
//
// Derived distributions (uniform double, normal, bounded integer) are
// implemented here rather than through <random> because the standard
// distributions are not specified bit-exactly across library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        counter_{0, 0, static_cast<std::uint32_t>(stream),
                 static_cast<std::uint32_t>(stream >> 32)} {}

  std::uint64_t seed() const {
    return static_cast<std::uint64_t>(key_[0]) |
           (static_cast<std::uint64_t>(key_[1]) << 32);
  }

  // Independent generator for a sub-task; the parent is not advanced.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t mixed = stream * 0x9E3779B97F4A7C15ULL ^
                          (static_cast<std::uint64_t>(counter_[2]) |
                           static_cast<std::uint64_t>(counter_[3]) << 32);
    return Rng(seed(), mixed + 1);
  }

  std::uint32_t next_u32() {
    if (index_ == 4) refill();
    return block_[index_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) without modulo bias (Lemire's method).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t threshold = (0 - n) % n;
    while (true) {
      std::uint64_t x = next_u64();
      unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
      if (static_cast<std::uint64_t>(m) >= threshold)
        return static_cast<std::uint64_t>(m >> 64);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  void refill() {
    std::array<std::uint32_t, 4> ctr = counter_;
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * ctr[2];
      std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    block_ = ctr;
    index_ = 0;
    // 64-bit increment over the low two counter words.
    if (++counter_[0] == 0) ++counter_[1];
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int index_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lift3d
