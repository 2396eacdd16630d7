#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>

namespace forge {

/// 64-bit FNV-1a. Used wherever a hash must be stable across runs, hosts and
/// standard-library implementations (shard assignment, replay keys, digests).
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffset);

std::uint64_t splitmix64(std::uint64_t x);

/// Derives a child seed from a parent seed and a list of string keys. Keys are
/// separated by 0x1f so ("ab","c") and ("a","bc") differ.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::string_view> keys);

std::string hex64(std::uint64_t value);

/// Seeded generator with portable distributions. The engine is mt19937_64
/// (its output sequence is fixed by the standard); the std:: distribution
/// classes are implementation-defined, so the mappings live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Uniform real in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

/// Maps a 64-bit hash to [0, 1) using its top 53 bits.
inline double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace forge
