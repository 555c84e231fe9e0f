// Seeded random streams.
//
// Every stream is an std::mt19937_64 whose seed is derived from a tuple of
// integers (run seed, purpose tag, step, prompt, sample index, ...) by folding
// each value through the SplitMix64 finalizer. Streams for different tuples
// are independent, so rollouts can be drawn in any order or in parallel and
// still reproduce bit for bit.

#ifndef DSSGRPO_RNG_HPP_
#define DSSGRPO_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dssgrpo {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

// Purpose tags keep streams for different jobs apart under one run seed.
enum class Stream : std::uint64_t {
  kPrompt = 1,
  kRollout = 2,
  kReference = 3,
  kEval = 4,
  kTaskSet = 5,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits; independent of the standard
  // library's distribution implementations.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dssgrpo

#endif  // DSSGRPO_RNG_HPP_
