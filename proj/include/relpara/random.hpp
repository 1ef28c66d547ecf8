#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

// Portable seeded randomness. std::mt19937_64's output sequence is fixed by
// the standard; the distributions are not, so bounded draws are done here.
namespace relpara::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Per-call seed; independent of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view article_id,
                                 std::string_view call_kind) {
  std::uint64_t h = splitmix64(global_seed);
  h = splitmix64(h ^ fnv1a(article_id));
  h = splitmix64(h ^ fnv1a(call_kind));
  return h;
}

// Uniform integer in [0, bound) by rejection; bound > 0.
inline std::uint64_t uniform_below(std::mt19937_64& eng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  while (true) {
    std::uint64_t r = eng();
    if (r >= threshold) return r % bound;
  }
}

// k distinct positions of [0, n) in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::mt19937_64 eng(seed);
  for (std::size_t i = 0; i < k && i < n; ++i) {
    auto j = i + static_cast<std::size_t>(uniform_below(eng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k < n ? k : n);
  return pool;
}

}  // namespace relpara::rng
