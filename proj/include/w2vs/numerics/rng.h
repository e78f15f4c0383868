// Copyright 2026 The w2vs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef W2VS_NUMERICS_RNG_H_
#define W2VS_NUMERICS_RNG_H_

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

#include "w2vs/common/hash.h"

namespace w2vs::num {

inline constexpr std::uint64_t SplitMix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator. The stream is a pure function of
// (seed, purpose, step, stream), so draws for one masking or dropout site
// never depend on how many numbers other sites consumed before it.
//
// All distributions are implemented here rather than through <random> so
// that results are identical across standard library implementations.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::string_view purpose,
             std::uint64_t step = 0, std::uint64_t stream = 0)
      : key_(DeriveKey(seed, purpose, step, stream)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() { return NextU64(); }

  std::uint64_t NextU64() {
    ++counter_;
    return SplitMix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1); safe to pass to log().
  double UniformOpen() {
    return (static_cast<double>(NextU64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  double Normal() {
    // Box-Muller, one value per call; the sibling value is discarded so
    // that the stream position does not depend on call parity.
    const double u1 = UniformOpen();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  /// Uniform integer in [0, n). Rejection sampling, so unbiased.
  std::uint64_t Below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
      v = NextU64();
    } while (v >= limit);
    return v % n;
  }

  /// Independent generator derived from this one's key.
  CounterRng Split(std::string_view purpose, std::uint64_t step = 0,
                   std::uint64_t stream = 0) const {
    return CounterRng(key_, purpose, step, stream);
  }

  std::uint64_t key() const { return key_; }

 private:
  static std::uint64_t DeriveKey(std::uint64_t seed, std::string_view purpose,
                                 std::uint64_t step, std::uint64_t stream) {
    std::uint64_t k = SplitMix64(seed);
    k = SplitMix64(k ^ Fnv1a64(purpose));
    k = SplitMix64(k ^ (step * 0xd1b54a32d192ed03ULL));
    k = SplitMix64(k ^ (stream * 0xaef17502108ef2d9ULL));
    return k;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace w2vs::num

#endif  // W2VS_NUMERICS_RNG_H_
