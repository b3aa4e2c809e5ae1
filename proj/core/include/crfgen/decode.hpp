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

#include <cstdint>
#include <string>
#include <vector>

#include "crfgen/crf.hpp"
#include "crfgen/tensor.hpp"

namespace crfgen {

enum class DecodeStrategy { dynamic, ratio_first, fixed_length };

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::dynamic;
  double alpha = 1.0;               // ratio_first only, in (0, 1]
  std::vector<int> fixed_lengths;   // fixed_length only; > 1 entry re-ranks
  int beam_k = 256;

  void validate() const;
  std::string to_string() const;
};

// "dynamic" | "ratio_first:alpha=0.3" | "fixed_length:lengths=5,8"
// with an optional ",k=<beam>" suffix on any strategy.
DecodeConfig parse_decode_config(const std::string& text);

struct DecodeResult {
  std::vector<int> trajectory;  // label id per decoded position
  std::vector<int> output;      // trajectory with reserved tokens removed
  double score = 0.0;           // path score of the trajectory
  int64_t latency_ns = 0;       // wall-clock time of this decode
};

std::vector<int> strip_reserved(const std::vector<int>& trajectory);

// Viterbi over every position of H; output length emerges from the learned
// [eos] absorption, there is no explicit stopping rule.
DecodeResult decode_dynamic(const Tensor& h, const CrfParams& params, int k);

// Identical to decode_dynamic restricted to the first round(alpha * T)
// positions (round-half-to-even, clamped to >= 1 with a warning).
DecodeResult decode_ratio_first(const Tensor& h, const CrfParams& params,
                                int k, double alpha);

// Viterbi over exactly the first l positions with [eos] removed from the
// candidate sets (the no-EOS model variant).
DecodeResult decode_fixed_length(const Tensor& h, const CrfParams& params,
                                 int k, int l);

// Runs decode_fixed_length per candidate length and keeps the result with
// the highest length-normalized path score; ties go to the shorter length.
DecodeResult decode_lpd(const Tensor& h, const CrfParams& params, int k,
                        const std::vector<int>& lengths);

DecodeResult run_decode(const Tensor& h, const CrfParams& params,
                        const DecodeConfig& config);

// Decode output file: one line per example with tab-separated fields
// example id, detokenized output, path score, latency in nanoseconds.
struct DecodeFileEntry {
  int64_t id = 0;
  std::vector<std::string> output;
  double score = 0.0;
  int64_t latency_ns = 0;
};

void write_decode_file(const std::string& path,
                       const std::vector<DecodeFileEntry>& entries);
std::vector<DecodeFileEntry> read_decode_file(const std::string& path);

}  // namespace crfgen
