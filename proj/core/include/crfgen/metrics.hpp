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
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace crfgen {

using Tokens = std::vector<std::string>;

// All metric values are percentages in [0, 100].

// 100 * (1 - unique n-grams / total n-grams); 0 when there are no n-grams.
double rep_n(const Tokens& output, int n);

// Balanced F1 over clipped n-gram overlap counts.
double rouge_n(const Tokens& candidate, const Tokens& reference, int n);

// LCS-based precision/recall/F1.
double rouge_l(const Tokens& candidate, const Tokens& reference);

// F1 over the kept source tokens of a compression. Uses position-aligned
// kept-index sets when both sides are subsequences of the source, otherwise
// falls back to token multisets (and reports it via `multiset_fallback`).
double token_kept_f1(const Tokens& candidate, const Tokens& reference,
                     const Tokens& source, bool* multiset_fallback = nullptr);

// Corpus BLEU with brevity penalty; zero match counts are floored at 1e-9.
double bleu(const std::vector<Tokens>& candidates,
            const std::vector<Tokens>& references, int max_n = 4);

struct MetricReport {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rouge_l = 0.0;
  double token_kept_f1 = 0.0;
  double bleu = 0.0;
  std::map<int, double> rep;  // n -> corpus mean, n = 1..4
  double mean_latency_ns = 0.0;
  std::optional<double> speedup_vs_baseline;

  // key: value lines.
  std::string to_text() const;
  // Tab-separated row (and its header) for aggregation across runs.
  static std::string tsv_header();
  std::string to_tsv_row() const;
};

// Corpus means of every quality metric; latency fields are left at zero.
MetricReport evaluate_outputs(const std::vector<Tokens>& outputs,
                              const std::vector<Tokens>& references,
                              const std::vector<Tokens>& sources);

}  // namespace crfgen
