#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace nvcav {

/// SplitMix64 finalizer; used to derive independent stream keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// xoshiro256** seeded from a (master seed, stream, counter) triple.
///
/// Every repetition of every experiment owns its own stream, derived purely
/// from the master seed and the repetition index, so results never depend on
/// which worker executes a repetition or in what order.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t counter = 0) noexcept {
    std::uint64_t k = splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
    k = splitmix64(k ^ splitmix64(counter * 0xd1342543de82ef95ULL + 1));
    for (auto& w : s_) {
      k = splitmix64(k);
      w = k;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept { return ((*this)() >> 11) * 0x1.0p-53 + 0x1.0p-54; }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  double exponential(double rate) noexcept { return -std::log(uniform()) / rate; }

  double normal() noexcept {
    // Box-Muller without caching keeps the stream position a pure function of
    // the call sequence.
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Poisson variate by inversion; intended for the small means that occur
  /// in per-window background counts.
  unsigned poisson(double mean) noexcept {
    if (mean <= 0.0) return 0;
    if (mean > 30.0) {
      const double x = std::round(mean + std::sqrt(mean) * normal());
      return x < 0.0 ? 0u : static_cast<unsigned>(x);
    }
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    unsigned k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }

  /// Number of failures before the first success of a Bernoulli(p) trial.
  std::uint64_t geometric(double p) noexcept {
    if (p >= 1.0) return 0;
    if (p <= 0.0) return std::numeric_limits<std::uint64_t>::max();
    const double g = std::floor(std::log(uniform()) / std::log1p(-p));
    return g > 1e18 ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(g);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4]{};
};

}  // namespace nvcav
