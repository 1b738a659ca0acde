#ifndef TPRT_RNG_HPP_
#define TPRT_RNG_HPP_
//! \file rng.hpp
//  \brief Deterministic seeded random streams (splitmix64, named substreams).

#include <cstdint>
#include <string_view>

namespace tprt {

// splitmix64: tiny, full-period, and identical on every platform. We avoid
// <random> distributions because their output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on [-1, 1]
  double uniform_pm1() { return 2.0 * uniform() - 1.0; }

  // uniform on [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
};

// All randomness in a run flows from one seed; independent consumers get
// collision-resistant substreams keyed by name (FNV-1a, then remixed).
inline Rng make_stream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : name) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  Rng mixer(seed ^ h);
  mixer.next_u64();
  return Rng(mixer.next_u64());
}

}  // namespace tprt

#endif  // TPRT_RNG_HPP_
