// Copyright 2026 The crfgen Authors.
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
#include <stdexcept>
#include <string>
#include <vector>

namespace crfgen {

// Error taxonomy; the CLI maps these onto distinct exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Tensor shape or dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};
// Violated operation precondition (non-scalar loss, bad beam size, ...).
struct ContractError : Error {
  using Error::Error;
};
// Invalid configuration value or invariant.
struct ConfigError : Error {
  using Error::Error;
};
// File and parsing problems, reported with path/line context.
struct IoError : Error {
  using Error::Error;
};
// Token or id outside the vocabulary.
struct VocabError : Error {
  using Error::Error;
};

// Reserved token ids are fixed by the vocabulary file contract (lines 0-4).
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kUnkId = 4;
inline constexpr int kNumReserved = 5;

inline const char* const kReservedTokens[kNumReserved] = {"[pad]", "[cls]",
                                                          "[sep]", "[eos]",
                                                          "[unk]"};

inline bool is_reserved_id(int id) { return id >= 0 && id < kNumReserved; }

// Deterministic RNG wrapper. All randomness in the engine flows through
// explicitly seeded instances of this class.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(gen_);
  }

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  uint64_t next_u64() { return gen_(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), gen_);
  }

  // Derive an independent child stream, e.g. one per corpus split.
  Rng split(uint64_t tag) {
    uint64_t x = gen_() ^ (0x9e3779b97f4a7c15ull + tag);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return Rng(x);
  }

 private:
  std::mt19937_64 gen_;
};

// Round-half-to-even; the integer rounding used for alpha * T.
inline long round_half_even(double x) {
  double f = std::floor(x);
  double frac = x - f;
  long n = static_cast<long>(f);
  if (frac > 0.5) return n + 1;
  if (frac < 0.5) return n;
  return (n % 2 == 0) ? n : n + 1;
}

inline int round_half_even_min1(double x) {
  long r = round_half_even(x);
  return static_cast<int>(r < 1 ? 1 : r);
}

inline std::string shape_to_string(const std::vector<size_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

}  // namespace crfgen
