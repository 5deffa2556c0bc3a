#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace clipc {

/// SplitMix64 finalizer. Used both as a hash for key derivation and as the
/// state transition of `Rng`.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over bytes; stable across platforms.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derive a stream key from a list of integer coordinates, e.g.
/// (seed, epoch, step, slot, purpose). Order matters.
std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept;

/// Small counter-based generator with portable distributions.
///
/// The standard library distributions are implementation-defined, so every
/// draw used by the pipeline goes through this class to keep runs
/// bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t key) noexcept : state_(key) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi) noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() noexcept;

  /// Normal(0, std) truncated to [-2 std, 2 std] by rejection.
  double truncated_normal(double stddev) noexcept;

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Purpose tags for keyed streams. Values are part of the reproducibility
/// contract; never renumber.
enum class Stream : std::uint64_t {
  kCompose = 1,
  kPartner = 2,
  kOrder = 3,
  kAxis = 4,
  kCropA = 5,
  kCropB = 6,
  kMix = 7,
  kEda = 8,
  kShuffle = 9,
  kInit = 10,
  kFixedPairing = 11,
  kSynthetic = 12,
  kProbe = 13,
};

}  // namespace clipc
