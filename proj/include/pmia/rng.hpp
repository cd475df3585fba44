// Counter-based seeded random streams. Every stochastic operation in the
// library takes an explicit stream, so whole experiments replay bit-identically
// and parallel trials can draw from disjoint substreams.
#ifndef PMIA_RNG_HPP
#define PMIA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>

namespace pmia {

namespace detail {

// SplitMix64 finalizer (Stafford mix13).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// A stream is a 64-bit key plus an implicit counter; output i is a hash of
// (key, i). split(id) derives an unrelated child key, leaving this stream's
// own sequence untouched.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : key_(detail::mix64(seed)), counter_(0) {}

  std::uint64_t next_u64() { return detail::mix64(key_ + 0x632BE59BD9B4E019ULL * ++counter_); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  bool coin() { return (next_u64() & 1ULL) != 0; }

  // Standard normal via Box-Muller (cosine branch only). Self-contained so
  // sequences do not depend on the platform's std::normal_distribution.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Child stream for `id`; disjoint from this stream and from other ids.
  Rng split(std::uint64_t id) const {
    Rng child(0);
    child.key_ = detail::mix64(detail::mix64(key_ ^ 0xD1B54A32D192ED03ULL) + id);
    child.counter_ = 0;
    return child;
  }

  // UniformRandomBitGenerator interface.
  std::uint64_t operator()() { return next_u64(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return std::numeric_limits<std::uint64_t>::max(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace pmia

#endif  // PMIA_RNG_HPP
