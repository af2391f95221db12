#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fedseg {

// SplitMix64 finalizer, used for seed-stream derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child-stream scheme: derive_seed(parent, key) = splitmix64(parent ^ splitmix64(key)).
// Every center, study, round and epoch gets its own stream through this map,
// so generated data and training order never depend on execution order.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t key) {
  return splitmix64(parent ^ splitmix64(key));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t key1,
                                 std::uint64_t key2) {
  return derive_seed(derive_seed(parent, key1), key2);
}

// Fixed tags for the derivation tree (documented in the README).
enum SeedTag : std::uint64_t {
  kSeedCenter = 1,     // master -> center profile stream
  kSeedStudy = 2,      // center -> per-study stream
  kSeedSplit = 3,      // center -> train/test split stream
  kSeedEpoch = 4,      // train seed -> per-epoch shuffle stream
  kSeedRound = 5,      // center/train seed -> per-round training stream
  kSeedModelInit = 6,  // master -> initial model parameters
};

// Deterministic RNG: the std::mt19937_64 engine is bit-exact per the
// standard; the transforms below are in-house because the standard
// library's distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform double in [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n); multiply-shift, deterministic
  std::uint64_t uniform_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  // uniform integer in [lo, hi] inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    uniform_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // standard normal via Box-Muller; the spare value is cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates permutation of 0..n-1
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedseg
