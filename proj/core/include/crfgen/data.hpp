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

#include <string>
#include <vector>

#include "crfgen/common.hpp"
#include "crfgen/vocab.hpp"

namespace crfgen {

struct Corpus {
  struct Example {
    std::vector<std::string> source;
    std::vector<std::string> target;
  };
  std::vector<Example> examples;

  size_t size() const { return examples.size(); }
};

enum class TaskType { compression, noisy_copy, substitution_translation };

TaskType parse_task_type(const std::string& name);
std::string task_type_name(TaskType t);

// Synthetic task description. Semantics of keep_ratio by task:
//   compression  — probability that a source position carries a content
//                  token; targets keep exactly the content tokens, so the
//                  mapping is deterministic given the source.
//   noisy_copy   — probability that a target position copies the source
//                  token instead of a random substitute.
//   substitution_translation — (1 - keep_ratio) is the probability of each
//                  non-overlapping adjacent swap after the token mapping.
struct TaskSpec {
  TaskType kind = TaskType::compression;
  int vocab_size = 200;   // generated tokens, reserved ids excluded
  int min_len = 10;
  int max_len = 30;
  double keep_ratio = 0.3;
  double repetition_bias = 0.0;  // chance of duplicating the previous token
  int n_examples = 1000;
  uint64_t seed = 1;

  void validate() const;
  // Compression is the length-reducing task; the others preserve length.
  bool length_reducing() const { return kind == TaskType::compression; }
};

Corpus generate(const TaskSpec& spec);

// One example per line: source tokens, a tab, target tokens.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

// Reserved ids 0-4, then tokens by descending frequency, ties lexicographic.
Vocabulary build_vocab(const Corpus& corpus, size_t max_size);

struct CorpusStats {
  size_t examples = 0;
  size_t min_source_len = 0, max_source_len = 0;
  size_t min_target_len = 0, max_target_len = 0;
  double mean_ratio = 0.0;               // target/source token ratio
  std::vector<size_t> ratio_histogram;   // buckets of width 0.05 from 0
  std::vector<double> ratios;            // per-example, sorted ascending

  double ratio_percentile(double p) const;  // p in [0, 100]
  std::string to_text() const;              // key: value lines
};

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace crfgen
