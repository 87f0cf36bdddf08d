#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace accmer {

// 64-bit FNV-1a over the stream name.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Named substream of the run seed. The stream key is
/// splitmix64(seed ^ fnv1a64(name)), so it depends only on (seed, name):
/// adding a new consumer never shifts the draws of existing streams.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name)
      : gen_(splitmix64(seed ^ fnv1a64(name))) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t rem = (0 - n) % n;  // 2^64 mod n
    if (rem == 0) return gen_() % n;        // n is a power of two
    const std::uint64_t bound = 0 - rem;    // largest multiple of n
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= bound);
    return x % n;
  }

  /// Double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace accmer
