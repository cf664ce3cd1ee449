#pragma once
// Shared basic types, integer helpers, deterministic RNG, and the structural
// fault type used across the simulator.

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace spms {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;
using Word = u64;

inline constexpr u32 kNoNode = 0xffffffffu;
inline constexpr u64 kNoAddr = ~u64{0};

// Thrown on violations of structural invariants (malformed dags, bad
// directories, non-permutations, allocator misuse, ...). Tests assert on it;
// reaching one in a normal run is a bug.
class SimFault : public std::runtime_error {
 public:
  explicit SimFault(const std::string& what) : std::runtime_error(what) {}
};

#define SPMS_CHECK(cond, msg)                                              \
  do {                                                                     \
    if (!(cond)) {                                                         \
      throw ::spms::SimFault(std::string(__FILE__) + ":" +                 \
                             std::to_string(__LINE__) + ": " + (msg));     \
    }                                                                      \
  } while (0)

inline constexpr u64 ceil_div(u64 a, u64 b) { return b == 0 ? 0 : (a + b - 1) / b; }

inline constexpr bool is_pow2(u64 x) { return x != 0 && (x & (x - 1)) == 0; }

// Floor of log2; requires x > 0.
inline u32 ilog2(u64 x) {
  u32 r = 0;
  while (x >>= 1) ++r;
  return r;
}

// Ceiling of log2; clog2(1) == 0.
inline u32 clog2(u64 x) {
  if (x <= 1) return 0;
  return ilog2(x - 1) + 1;
}

// Saturating multiply/power: values that would overflow clamp to u64 max.
// Used for thresholds like r^(c/2) where the comparison result, not the
// value, matters once the threshold exceeds any feasible n.
inline u64 sat_mul(u64 a, u64 b) {
  if (a == 0 || b == 0) return 0;
  if (a > std::numeric_limits<u64>::max() / b) return std::numeric_limits<u64>::max();
  return a * b;
}

inline u64 sat_pow(u64 base, u64 exp) {
  u64 r = 1;
  for (u64 i = 0; i < exp; ++i) r = sat_mul(r, base);
  return r;
}

// Smallest q with q*q >= x.
inline u64 isqrt_ceil(u64 x) {
  if (x <= 1) return x;
  u64 lo = 1, hi = 1;
  while (sat_mul(hi, hi) < x) hi *= 2;
  while (lo < hi) {
    u64 mid = lo + (hi - lo) / 2;
    if (sat_mul(mid, mid) >= x) hi = mid; else lo = mid + 1;
  }
  return lo;
}

// splitmix64: tiny, fast, and stable across platforms. All randomness in the
// simulator (input generators, steal victim selection) flows through this so
// runs are reproducible from their seeds alone.
struct Rng {
  u64 state;
  explicit Rng(u64 seed) : state(seed) {}
  u64 next() {
    u64 z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // Uniform-enough value in [0, n); deterministic, modulo bias accepted.
  u64 below(u64 n) { return n == 0 ? 0 : next() % n; }
};

// Mix two seeds into one (for per-processor RNG streams etc.).
inline u64 mix_seed(u64 a, u64 b) {
  Rng r(a ^ (b * 0x9e3779b97f4a7c15ull) ^ 0x5851f42d4c957f2dull);
  r.next();
  return r.next();
}

}  // namespace spms
