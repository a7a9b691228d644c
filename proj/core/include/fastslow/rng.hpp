#pragma once

#include <cmath>
#include <cstdint>

namespace fastslow {

/// Counter-based random stream. Distinct (master_seed, stream_id) pairs give
/// statistically independent streams; the same pair replays identically.
/// Each output word is a double-mixed hash of (key, counter), so there is no
/// sequential state beyond the counter itself and streams can be created
/// cheaply, one per Monte Carlo path.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : master_seed_(master_seed), stream_id_(stream_id) {
    key_ = mix64(master_seed ^ mix64(stream_id + 0x9e3779b97f4a7c15ULL));
    tweak_ = mix64(key_ ^ 0xda942042e4dd58b5ULL);
  }

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    std::uint64_t z = counter_++;
    z = mix64(z + key_);
    z = mix64(z ^ tweak_);
    return z;
  }

  /// Uniform on (0, 1]; never returns 0 so log() is safe.
  double uniform01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the paired value is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Deterministic child seed, used to keep seed ranges of independent
  /// estimators disjoint (e.g. the two sides of a weak-error comparison).
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) {
    return mix64(master ^ mix64(salt ^ 0xa0761d6478bd642fULL));
  }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t tweak_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace fastslow
