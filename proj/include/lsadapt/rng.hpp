#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>

namespace lsadapt {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over bytes.
std::uint64_t fnv1a(std::string_view bytes);

/// Child seed from a parent seed and a path of stream labels.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// Small portable generator (SplitMix64 stream). Every sampler below draws a
/// fixed number of words except the rejection-based ones (poisson, gamma), so
/// sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard normal (Box-Muller, one value per call).
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  int poisson(double mean);
  /// Gamma(shape, scale = 1).
  double gamma(double shape);
  /// Index drawn proportional to nonnegative weights (sum > 0).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::uint64_t state_;
};

}  // namespace lsadapt
