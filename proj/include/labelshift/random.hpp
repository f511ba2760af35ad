#pragma once

// Counter-based random numbers. A stream is (key, counter); the n-th draw is a
// pure function of both, so any trial can be replayed in isolation and streams
// never depend on scheduling order.

#include "labelshift/simplex.hpp"

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace labelshift::rng {

/// SplitMix64 finalizer: a bijective avalanche mix of 64 bits.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hash of a base seed and a path of indices, e.g. (base, shift, m, trial).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

class CounterRng {
public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) : key_(mix64(key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal by inverse CDF of one uniform.
  double normal();
  /// Gamma(shape, 1): Marsaglia–Tsang for shape >= 1, inverse CDF below.
  double gamma(double shape);
  /// Index drawn from a categorical distribution by inverse CDF.
  std::size_t categorical(const ProbVector& p);
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  std::uint64_t counter() const { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

} // namespace labelshift::rng
