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

#include <optional>

#include "crfgen/data.hpp"
#include "crfgen/decode.hpp"
#include "crfgen/metrics.hpp"
#include "crfgen/model.hpp"

namespace crfgen {

// What the per-example timer covers. end_to_end wraps input construction,
// encoding and decoding; decode_only is the decode phase alone (lattice
// construction plus Viterbi).
enum class TimingScope { end_to_end, decode_only };

struct BenchEntry {
  DecodeConfig config;
  MetricReport report;
  double median_latency_ns = 0.0;
  std::vector<int64_t> latencies_ns;  // one per example, decode order
};

struct BenchmarkReport {
  TimingScope scope = TimingScope::end_to_end;
  int warmup = 0;
  std::vector<BenchEntry> entries;

  std::string to_text() const;  // key: value lines plus one TSV row per config
};

// Runs the single-example benchmark protocol: every example is decoded
// individually and latencies are averaged per configuration. The first
// configuration is the speedup baseline unless an external baseline latency
// is supplied.
BenchmarkReport run_benchmark(Model& model, const Corpus& eval_corpus,
                              const Vocabulary& vocab,
                              const std::vector<DecodeConfig>& configs,
                              TimingScope scope = TimingScope::end_to_end,
                              int warmup_examples = 2,
                              std::optional<double> baseline_latency_ns =
                                  std::nullopt);

}  // namespace crfgen
