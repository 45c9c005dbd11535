// Copyright (c) the tdp authors.
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

#ifndef TDP_RNG_HPP_
#define TDP_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace tdp {

// Deterministic splitmix64 generator. State is a single u64, so checkpoints
// never have to serialize distribution internals; every consumer derives an
// independent stream from (seed, stream id, index) and can be replayed from
// the indices alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53 bits of resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Always consumes two uniforms and returns
  // one value; no cached spare, so the state fully determines the sequence.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  std::uint64_t index(std::uint64_t n) { return n ? next_u64() % n : 0; }

  std::uint64_t state() const { return state_; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Independent stream keyed by (seed, stream id, index).
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id,
                    std::uint64_t idx) {
    std::uint64_t s = mix(seed + 0x9e3779b97f4a7c15ull);
    s = mix(s ^ (stream_id + 0xbf58476d1ce4e5b9ull));
    s = mix(s ^ (idx + 0x94d049bb133111ebull));
    return Rng(s);
  }

 private:
  std::uint64_t state_;
};

// Stream ids used across the project; fixed so replays stay stable.
namespace rng_stream {
constexpr std::uint64_t kParamInit = 1;
constexpr std::uint64_t kDataset = 2;
constexpr std::uint64_t kTrainStep = 3;
constexpr std::uint64_t kSynthCorpus = 4;
constexpr std::uint64_t kStubCodec = 5;
}  // namespace rng_stream

}  // namespace tdp

#endif  // TDP_RNG_HPP_
