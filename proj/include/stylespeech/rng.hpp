// Copyright 2026 The stylespeech authors
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

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace stylespeech {

// One root seed fans out to named component seeds (init, dropout,
// griffin_lim, ...) so each component's stream is reproducible on its own.
inline uint64_t derive_seed(uint64_t root, std::string_view name) {
  // FNV-1a over the name, then splitmix64 to decorrelate.
  uint64_t h = 1469598103934665603ull;
  for (char c : name) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  uint64_t z = root + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::mt19937 make_rng(uint64_t root, std::string_view name) {
  return std::mt19937(static_cast<uint32_t>(derive_seed(root, name)));
}

// Hand-rolled draws: std distributions are implementation defined, these
// are bit-stable wherever mt19937 is.
inline double uniform_double(std::mt19937& rng) {
  return rng() * (1.0 / 4294967296.0);  // [0, 1)
}

inline double uniform_in(std::mt19937& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_double(rng);
}

// Box-Muller.
inline double normal_double(std::mt19937& rng) {
  double u1 = (rng() + 1.0) * (1.0 / 4294967296.0);
  double u2 = rng() * (1.0 / 4294967296.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace stylespeech
