// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace advreg {

/// Combines two 64-bit values into a well-mixed seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Seeded random source. The engine is std::mt19937_64, whose output sequence
/// is fixed by the standard; the sampling transforms below are written out
/// because the std:: distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// Standard normal via Box-Muller.
  double normal();
  /// Index drawn from a (not necessarily normalized) weight vector.
  std::size_t categorical(std::span<const double> weights);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace advreg
