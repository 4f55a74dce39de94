#pragma once

#include <cstdint>
#include <string_view>

namespace meshsdf {

/// Deterministic 64-bit generator (splitmix64 core).
///
/// Every stochastic component of a run draws from a child stream obtained
/// via stream(name). Child seeds depend only on the parent seed and the
/// stream name, so adding or reordering consumers never reshuffles the
/// draws of unrelated modules.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], both ends inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Standard normal via Box-Muller. Consumes exactly two uniforms per call
  /// so the stream position stays easy to reason about.
  double normal();

  /// Child stream derived from the construction seed and the stream name.
  /// Independent of how much this generator has already been consumed.
  Rng stream(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    Rng child(seed_ ^ (h * 0x9e3779b97f4a7c15ULL));
    child.next_u64();
    return Rng(child.next_u64());
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace meshsdf
