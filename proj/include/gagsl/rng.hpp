#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "gagsl/error.hpp"

namespace gagsl {

// splitmix64 finalizer; full-period bijection on 64-bit words.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_string64(const std::string& s) {
  // FNV-1a, then one splitmix round to spread short names.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

// Counter-based random stream. Output i is a pure function of (key, i), so
// identical (seed, stream path) pairs reproduce identical draws on any
// platform regardless of how other streams were consumed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(splitmix64(seed)) {}

  // Child stream with an independent counter; the parent is unaffected.
  RngStream derive(const std::string& name) const {
    return RngStream(key_ ^ hash_string64(name), 0);
  }
  RngStream derive(std::uint64_t index) const {
    return RngStream(key_ ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL), 0);
  }

  std::uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw ContractViolation("next_below(0)");
    const std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; one value per call (second is dropped to
  // keep the draw count a pure function of the call count).
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // k distinct indices drawn uniformly from [0, n), order random
  // (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n)
      throw ContractViolation("sample_without_replacement: k=" + std::to_string(k) + " > n=" +
                              std::to_string(n));
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  std::uint64_t key() const { return key_; }

 private:
  RngStream(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stateless uniform in [0,1) addressed by an arbitrary key tuple. Dropout
// masks use this so the value at (seed, layer, step, cell) never depends on
// evaluation order.
inline double unit_at(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(a + 0x243f6a8885a308d3ULL));
  h = splitmix64(h ^ splitmix64(b + 0x13198a2e03707344ULL));
  h = splitmix64(h ^ splitmix64(c + 0xa4093822299f31d0ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace gagsl
