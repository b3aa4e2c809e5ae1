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

#include "crfgen/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

namespace crfgen {

namespace {

using Clock = std::chrono::steady_clock;

double median_of(std::vector<int64_t> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return static_cast<double>(values[mid]);
  return 0.5 * static_cast<double>(values[mid - 1] + values[mid]);
}

}  // namespace

BenchmarkReport run_benchmark(Model& model, const Corpus& eval_corpus,
                              const Vocabulary& vocab,
                              const std::vector<DecodeConfig>& configs,
                              TimingScope scope, int warmup_examples,
                              std::optional<double> baseline_latency_ns) {
  if (configs.size() < 2 && !baseline_latency_ns) {
    throw ContractError(
        "benchmark: need >= 2 decode configs (or an external baseline) for "
        "relative speedups");
  }
  if (eval_corpus.examples.empty()) {
    throw ContractError("benchmark: empty evaluation corpus");
  }
  for (const DecodeConfig& c : configs) c.validate();

  BenchmarkReport report;
  report.scope = scope;
  report.warmup = warmup_examples;

  const TaskKind kind = model.config.encoder.task_kind();
  for (const DecodeConfig& config : configs) {
    BenchEntry entry;
    entry.config = config;

    // Warm-up pass, untimed.
    const size_t warm =
        std::min(eval_corpus.size(), static_cast<size_t>(
                                         std::max(0, warmup_examples)));
    for (size_t e = 0; e < warm; ++e) {
      const Corpus::Example& ex = eval_corpus.examples[e];
      std::vector<int> ids =
          build_input(ex.source, vocab, model.config.encoder, kind);
      Tensor h = encode(model.encoder, ids);
      (void)run_decode(h, model.crf, config);
    }

    // Timed pass: strictly one example at a time.
    std::vector<Tokens> outputs, references, sources;
    outputs.reserve(eval_corpus.size());
    double latency_sum = 0.0;
    for (const Corpus::Example& ex : eval_corpus.examples) {
      const auto start = Clock::now();
      std::vector<int> ids =
          build_input(ex.source, vocab, model.config.encoder, kind);
      Tensor h = encode(model.encoder, ids);
      DecodeResult r = run_decode(h, model.crf, config);
      const int64_t total_ns =
          std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() -
                                                               start)
              .count();
      const int64_t ns =
          scope == TimingScope::end_to_end ? total_ns : r.latency_ns;
      entry.latencies_ns.push_back(ns);
      latency_sum += static_cast<double>(ns);
      outputs.push_back(vocab.decode_all(r.output));
      references.push_back(ex.target);
      sources.push_back(ex.source);
    }

    entry.report = evaluate_outputs(outputs, references, sources);
    entry.report.mean_latency_ns =
        latency_sum / static_cast<double>(eval_corpus.size());
    entry.median_latency_ns = median_of(entry.latencies_ns);
    report.entries.push_back(std::move(entry));
  }

  const double base = baseline_latency_ns
                          ? *baseline_latency_ns
                          : report.entries.front().report.mean_latency_ns;
  for (BenchEntry& entry : report.entries) {
    entry.report.speedup_vs_baseline =
        base / entry.report.mean_latency_ns;
  }
  return report;
}

std::string BenchmarkReport::to_text() const {
  std::ostringstream os;
  os << "timing_scope: "
     << (scope == TimingScope::end_to_end ? "end_to_end" : "decode_only")
     << "\n";
  os << "warmup_examples: " << warmup << "\n";
  os << "configs: " << entries.size() << "\n";
  for (size_t i = 0; i < entries.size(); ++i) {
    const BenchEntry& e = entries[i];
    os << "\nconfig" << i << ": " << e.config.to_string() << "\n";
    std::istringstream lines(e.report.to_text());
    std::string line;
    while (std::getline(lines, line)) {
      os << "config" << i << "." << line << "\n";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", e.median_latency_ns);
    os << "config" << i << ".median_latency_ns: " << buf << "\n";
  }
  os << "\n# config\t" << MetricReport::tsv_header() << "\n";
  for (const BenchEntry& e : entries) {
    os << e.config.to_string() << '\t' << e.report.to_tsv_row() << "\n";
  }
  return os.str();
}

}  // namespace crfgen
