#pragma once
// Counter-based random streams.
//
// A stream is a 64-bit key plus a counter; draw i is splitmix64(key + i * golden).
// Streams for distinct (seed, run, purpose) triples are derived by hashing, so an
// extra consumer on one purpose never shifts the draws seen by another.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace ncal {

enum class Purpose : std::uint64_t {
  draws = 1,
  labels = 2,
  audit = 3,
  randomize = 4,
  oracle = 5,
  instance = 6,
  estimate = 7,
  init = 8,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Stream {
 public:
  using result_type = std::uint64_t;

  Stream() = default;
  explicit Stream(std::uint64_t key) : key_(splitmix64(key)) {}

  static Stream derive(std::uint64_t seed, std::uint64_t run, Purpose purpose) {
    std::uint64_t k = splitmix64(seed ^ 0xA0761D6478BD642FULL);
    k = splitmix64(k ^ (run * 0xE7037ED1A0B428DBULL));
    k = splitmix64(k ^ (static_cast<std::uint64_t>(purpose) * 0x8EBC6AF09C88C6E3ULL));
    Stream s;
    s.key_ = k;
    return s;
  }

  // Independent child stream; does not advance this one.
  Stream split(std::uint64_t tag) const {
    Stream s;
    s.key_ = splitmix64(key_ ^ splitmix64(tag + 0x589965CC75374CC3ULL));
    return s;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return splitmix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n) by rejection; n > 0.
  std::uint64_t index(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % n;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Box-Muller; two uniforms per call, no cached spare so the stream stays stateless
  // apart from the counter.
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace ncal
