// Copyright 2026 The GRACE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GRACE_RNG_HPP
#define GRACE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace grace {

// Seeded splitmix64 generator. Standard-library distributions are
// implementation-defined, which breaks byte-identical reports across
// toolchains; everything random in this project goes through this class.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform index in [0, n). Modulo bias is negligible for the domain sizes
  // used here (at most a few thousand).
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller, one deviate per call (the sine twin is discarded so the
  // stream position never depends on caller history).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = 1.0 - uniform(); // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double lognormal(double mu, double sigma) {
    return std::exp(normal(mu, sigma));
  }

  // Standard normal vector of length n.
  std::vector<double> normal_vector(std::size_t n) {
    std::vector<double> v(n);
    for (auto &x : v)
      x = normal();
    return v;
  }

private:
  std::uint64_t state_;
};

// Order-sensitive combination of seed components into one 64-bit seed.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x51ed270b35a7bd5fULL;
  for (std::uint64_t p : parts) {
    h ^= p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
  }
  return h;
}

inline std::uint64_t double_bits(double x) {
  std::uint64_t b;
  static_assert(sizeof(b) == sizeof(x));
  __builtin_memcpy(&b, &x, sizeof(b));
  return b;
}

} // namespace grace

#endif // GRACE_RNG_HPP
