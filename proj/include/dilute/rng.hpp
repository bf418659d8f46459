#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace dilute {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds a list of words into a single stream key.
constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (auto w : words) h = mix64(h ^ mix64(w));
  return h;
}

/// Maps 64 random bits to a double in [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based generator: output i of stream `key` is mix64(key + i*phi).
/// Two generators with the same key produce the same sequence, so any
/// quantity keyed by (seed, object id) is reproducible without shared state.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_));
  }

  double uniform() noexcept { return to_unit((*this)()); }

  /// Uniform on (0, 1]; safe to take the logarithm of.
  double uniform_pos() noexcept { return 1.0 - uniform(); }

  double exponential(double rate) noexcept { return -std::log(uniform_pos()) / rate; }

  /// Poisson variate by CDF inversion; intended for small means.
  int poisson(double mean) noexcept {
    double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u >= cdf && k < 1000) {
      ++k;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }

  constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dilute
