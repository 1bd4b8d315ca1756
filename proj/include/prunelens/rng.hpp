#pragma once

// Counter-based random streams. A value depends only on (key, counter), never
// on call order, so draws are independent of thread scheduling.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <string_view>

namespace prunelens::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Folds a sequence of words into one key.
constexpr std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t w : words) h = splitmix64(h ^ splitmix64(w + 0x632be59bd9b4e019ULL));
  return h;
}

// Subsystem seed derived from the top-level seed by a label.
constexpr std::uint64_t derive(std::uint64_t seed, std::string_view label) noexcept {
  return mix(seed, {fnv1a(label)});
}

class CounterStream {
 public:
  explicit constexpr CounterStream(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64(key_ ^ splitmix64(counter));
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(std::uint64_t counter, double lo, double hi) const noexcept {
    return lo + (hi - lo) * uniform(counter);
  }

  // Standard normal via Box-Muller on counters (2i, 2i+1).
  double normal(std::uint64_t index) const noexcept {
    const double u1 = 1.0 - uniform(2 * index);  // (0, 1]
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

// Sequential generator over a counter stream; used where draws are consumed
// in a fixed order (permutation tests, sampling).
class Sequence {
 public:
  explicit Sequence(std::uint64_t key) noexcept : stream_(key) {}

  std::uint64_t next() noexcept { return stream_.bits(counter_++); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  template <class Vec>
  void shuffle(Vec& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  CounterStream stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace prunelens::rng
