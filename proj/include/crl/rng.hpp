#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace crl {

/// Counter-based random stream. The stream is fully determined by
/// (master seed, purpose label, key...), so streams for different purposes or
/// environments never interact and can be drawn in any order.
///
/// Satisfies UniformRandomBitGenerator, so it plugs into <random>
/// distributions.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  SeededRng(std::uint64_t seed, std::string_view purpose,
            std::initializer_list<std::uint64_t> key = {})
      : base_(derive(seed, purpose, key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(base_ + kGolden * ++counter_); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t counter() const { return counter_; }

  /// Hash of (seed, purpose, key); also used to derive child seeds.
  static std::uint64_t derive(std::uint64_t seed, std::string_view purpose,
                              std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label
    for (unsigned char c : purpose) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    std::uint64_t state = mix(seed ^ mix(h));
    for (std::uint64_t part : key) state = mix(state ^ mix(part + kGolden));
    return state;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  // SplitMix64 finalizer.
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace crl
