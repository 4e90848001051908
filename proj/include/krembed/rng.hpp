// Copyright 2026 The krembed Authors.
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

// Counter-based normal generator.
//
// Draw number i of the stream with seed s is a pure function of (s, i):
//
//   key        = mix64(s ^ 0x243F6A8885A308D3)
//   bits(i)    = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)
//   uniform(i) = ((bits(i) >> 11) + 1) * 2^-53          in (0, 1]
//   normal(i)  = Box-Muller on uniform(2*(i/2)), uniform(2*(i/2)+1),
//                cosine branch for even i, sine branch for odd i
//
// where mix64 is the SplitMix64 finalizer. Matrices are filled in
// column-major order, so entry (r, c) of gaussian(rows, cols, seed) is
// normal(r + c*rows). Streams are splittable through derive_seed().
// Reproducibility across platforms is limited only by the libm used for
// log/sqrt/cos/sin.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace krembed {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed for an independent sub-stream identified by (a, b).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed ^ 0x6A09E667F3BCC908ULL);
  h = mix64(h ^ (a + 0x9E3779B97F4A7C15ULL));
  return mix64(h ^ (b + 0xBB67AE8584CAA73BULL));
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix64(seed ^ 0x243F6A8885A308D3ULL)) {}

  std::uint64_t bits(std::uint64_t i) const { return mix64(key_ + (i + 1) * 0x9E3779B97F4A7C15ULL); }

  double uniform(std::uint64_t i) const {
    return static_cast<double>((bits(i) >> 11) + 1) * 0x1.0p-53;
  }

  double normal(std::uint64_t i) const {
    const std::uint64_t pair = i >> 1;
    const double u1 = uniform(2 * pair);
    const double u2 = uniform(2 * pair + 1);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (i & 1) ? radius * std::sin(angle) : radius * std::cos(angle);
  }

 private:
  std::uint64_t key_;
};

/// Sequential view of a CounterRng.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}
  double operator()() { return rng_.normal(next_++); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace krembed
