#ifndef GAITPAC_RNG_HPP
#define GAITPAC_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gaitpac {

// Stream purposes. Values are part of the on-disk reproducibility contract;
// append only.
enum class Purpose : std::uint64_t {
  kHeading = 1,
  kLeader = 2,
  kForceNoise = 3,
  kPerturbation = 4,
  kShuffle = 5,
  kDiscretize = 6,
  kPosteriorDraw = 7,
  kEsSeed = 8,
};

/// SplitMix64 finalizer: a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// Derives an independent stream key from a parent key and a (index, purpose) pair.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index, Purpose purpose) noexcept {
  std::uint64_t h = mix64(parent + kGolden);
  h = mix64(h ^ mix64(index + 2 * kGolden));
  h = mix64(h ^ mix64(static_cast<std::uint64_t>(purpose) + 3 * kGolden));
  return h;
}

constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix64(mix64(parent + kGolden) ^ mix64(index + 5 * kGolden));
}

/// Counter-based generator: draw n of a stream keyed by k is mix64(k + n * golden).
/// Any draw is addressable by (key, counter), so streams can be split and
/// consumed concurrently without coordination. Normals use Box-Muller so that
/// sequences are identical across standard library implementations.
class Stream {
 public:
  explicit constexpr Stream(std::uint64_t key) noexcept : key_(mix64(key)) {}

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - n + 1) % n;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= limit) return x % n;
    }
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gaitpac

#endif  // GAITPAC_RNG_HPP
