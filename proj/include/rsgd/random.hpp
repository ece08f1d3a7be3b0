#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace rsgd {

/// Purpose tags used as the first key component so that streams drawn for
/// different jobs never collide.
enum class StreamPurpose : std::uint64_t {
  kMask = 1,
  kThinning = 2,
  kImputation = 3,
  kShuffle = 4,
  kPerturbation = 5,
  kData = 6,
  kMechanism = 7,
  kMonteCarlo = 8,
};

/// Counter-based random stream. The n-th output is a pure function of
/// (key, n), so a stream keyed by (seed, row, column, level) replays exactly
/// regardless of evaluation order or threading.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  constexpr explicit RandomStream(std::uint64_t key = 0) : key_(mix(key ^ 0x6a09e667f3bcc909ULL)) {}

  /// Child stream; distinct tags give statistically independent streams.
  constexpr RandomStream substream(std::uint64_t tag) const {
    RandomStream s;
    s.key_ = mix(key_ ^ mix(tag + 0x9e3779b97f4a7c15ULL));
    return s;
  }

  constexpr RandomStream substream(std::initializer_list<std::uint64_t> tags) const {
    RandomStream s = *this;
    for (auto t : tags) s = s.substream(t);
    return s;
  }

  constexpr RandomStream substream(StreamPurpose purpose) const {
    return substream(static_cast<std::uint64_t>(purpose));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; one output per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t key() const { return key_; }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace rsgd
