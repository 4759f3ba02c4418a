// Copyright 2026 The IST Lab Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include <cstdint>
#include <random>

namespace istlab {

// SplitMix64 finalizer. Used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed of substream `index` of `seed`. Substreams for (seed, i) and (seed, j)
// are statistically independent for i != j.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// Fixed tags so that different consumers of one seed never share a stream.
inline constexpr std::uint64_t kStreamProblem = 0x70726f626c656dULL;
inline constexpr std::uint64_t kStreamX0 = 0x78305f696e6974ULL;
inline constexpr std::uint64_t kStreamRepeat = 0x7265706561747aULL;

// Random source used throughout: std::mt19937_64 (fully specified by the
// standard, so streams are identical across platforms). All derived
// distributions are implemented here rather than with <random> distribution
// classes, whose algorithms are implementation-defined.
//
//   uniform01     53 high bits of one draw, scaled into [0, 1)
//   uniform_below Lemire's multiply-shift with rejection (unbiased)
//   normal        Box-Muller, both outputs used in order
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_below(std::uint64_t bound);

  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace istlab
