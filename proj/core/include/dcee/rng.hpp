#pragma once

#include <cstdint>

#include <boost/random/normal_distribution.hpp>

namespace dcee {

/// SplitMix64 output finalizer. A bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// Combines key words into one stream key.
constexpr std::uint64_t combine_key(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(a + kGoldenGamma) ^ (b * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
}

/// Counter-based random stream.
///
/// Every draw is addressed by an explicit counter, so a value depends only on
/// (key, counter) and never on how many other draws happened before it. The
/// simulator addresses draws by (decision point, variable tag), which keeps
/// per-person streams independent of scheduling order and lets two policies
/// share common random numbers by sharing a key.
class CounterStream {
 public:
  constexpr explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}
  constexpr CounterStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) noexcept
      : key_(combine_key(combine_key(seed, stream), substream)) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix64(key_ + (counter + 1) * kGoldenGamma);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal from Boost's ziggurat sampler. Its (rare) rejection
  /// retries draw from a sub-stream private to `counter`, so the value still
  /// depends on (key, counter) only.
  double normal(std::uint64_t counter) const {
    SubStream sub{combine_key(key_, counter)};
    return boost::random::normal_distribution<double>()(sub);
  }

  bool bernoulli(std::uint64_t counter, double p) const noexcept { return uniform(counter) < p; }

  constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  struct SubStream {
    using result_type = std::uint64_t;
    std::uint64_t key;
    std::uint64_t i = 0;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return mix64(key + (++i) * kGoldenGamma); }
  };

  std::uint64_t key_;
};

}  // namespace dcee
