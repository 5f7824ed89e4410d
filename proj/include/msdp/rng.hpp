#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace msdp {

// splitmix64; used to expand one root seed into well-mixed child seeds.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Named sub-seed derivation: every component draws its randomness from
// derive_seed(root, "component"), so a single --seed reproduces a whole run.
inline uint64_t derive_seed(uint64_t root, std::string_view name) {
  return splitmix64(root ^ fnv1a(name));
}

inline uint64_t derive_seed(uint64_t root, std::string_view name, uint64_t index) {
  return splitmix64(derive_seed(root, name) ^ splitmix64(index + 1));
}

// mt19937_64 with hand-rolled draw helpers. The std <random> distributions
// are implementation-defined; these are not, so a seed means the same
// sequence everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n) via rejection sampling.
  size_t uniform_index(size_t n) {
    uint64_t threshold = (0 - static_cast<uint64_t>(n)) % n;
    for (;;) {
      uint64_t r = engine_();
      if (r >= threshold) return static_cast<size_t>(r % n);
    }
  }

  double uniform_real() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller, one value per call (the spare is discarded to keep the
    // consumption pattern independent of call interleaving).
    double u1 = uniform_real();
    double u2 = uniform_real();
    while (u1 == 0.0) u1 = uniform_real();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), in draw order; k must be <= n.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    std::vector<size_t> pool(n);
    for (size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<size_t> out;
    out.reserve(k);
    for (size_t i = 0; i < k; ++i) {
      size_t j = uniform_index(pool.size());
      out.push_back(pool[j]);
      pool[j] = pool.back();
      pool.pop_back();
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace msdp
