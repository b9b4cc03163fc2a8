#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace lnas {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Every API that takes a seed routes its randomness through this wrapper so that
// identical seeds give identical byte streams. std::* distributions are
// implementation-defined, so the draws below are spelled out by hand.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, n). n must be nonzero.
  uint64_t bounded(uint64_t n) {
    if (n == 0) throw Error("Rng::bounded: n == 0");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  // [0, 1), 53-bit resolution.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal, Box-Muller. No cached second value: one draw consumes two
  // uniforms, which keeps replay independent of call grouping.
  double gaussian() {
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Independent child stream. Children with distinct stream ids never collide
  // regardless of how many draws the parent has made.
  Rng fork(uint64_t stream) const {
    uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return Rng(x);
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

// 128-bit content digest. Used for canonical graph keys and config digests.
struct Digest128 {
  uint64_t hi = 0;
  uint64_t lo = 0;

  friend bool operator==(const Digest128& a, const Digest128& b) {
    return a.hi == b.hi && a.lo == b.lo;
  }
  friend bool operator<(const Digest128& a, const Digest128& b) {
    return a.hi != b.hi ? a.hi < b.hi : a.lo < b.lo;
  }

  std::string hex() const;
  static Digest128 from_hex(const std::string& s);  // throws lnas::Error on malformed input
};

Digest128 fnv128(const void* data, size_t len);
inline Digest128 fnv128(const std::string& s) { return fnv128(s.data(), s.size()); }

// Deterministic map of a digest onto [-1, 1].
double unit_signed(const Digest128& d);

using CanonicalKey = Digest128;

}  // namespace lnas

template <>
struct std::hash<lnas::Digest128> {
  size_t operator()(const lnas::Digest128& d) const noexcept {
    return size_t(d.hi ^ (d.lo * 0x9e3779b97f4a7c15ULL));
  }
};
