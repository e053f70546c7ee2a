#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace vidseg {

// splitmix64 finalizer, used to derive independent sub-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t h = seed + 0x9e3779b97f4a7c15ULL * (key + 1);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

// Deterministic random stream. Wraps mt19937_64 but derives doubles, bounded
// ints and gaussians itself so results do not depend on the standard
// library's distribution implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  // Independent stream keyed off this one's seed; order-free per-item use.
  RandomStream fork(std::uint64_t key) const { return RandomStream(mix_seed(seed_, key)); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return rng_(); }

  // Uniform in [0, 1).
  double uniform() { return (rng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Rejection keeps the draw unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = ~0ULL - ~0ULL % n;
    std::uint64_t x;
    do {
      x = rng_();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double gaussian() {  // Box-Muller, one value per call
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {  // Fisher-Yates
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vidseg
