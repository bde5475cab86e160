#pragma once

#include <cmath>
#include <cstdint>

namespace kinsobol {

/// SplitMix64 finalizer (Steele, Lea & Flood; constants from Vigna's
/// reference implementation).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Combine a key with another word; order-sensitive.
constexpr std::uint64_t hash_combine(std::uint64_t key, std::uint64_t word) noexcept {
  return mix64(key ^ mix64(word + 0x9e3779b97f4a7c15ULL));
}

/// Counter-based stream: draw n is mix64(key + (n + 1) * golden), i.e. the
/// SplitMix64 sequence started at `key`. Output is fully determined by
/// (key, counter), so streams are reproducible on any platform and cheap to
/// derive per (seed, realization, channel).
class CounterStream {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  constexpr explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t next() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform on the open interval (0, 1): 53-bit grid shifted by half a step.
  double uniform_open() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unit-rate exponential increment, -ln(r) with r in (0, 1).
  double exponential() noexcept { return -std::log(uniform_open()); }

  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Key of the stream reaction channel `channel` uses in realization `omega`.
constexpr std::uint64_t channel_key(std::uint64_t master_seed, std::uint64_t omega,
                                    std::uint64_t channel) noexcept {
  return hash_combine(hash_combine(mix64(master_seed), omega), channel);
}

}  // namespace kinsobol
