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
#include <ostream>

#include "crfgen/data.hpp"
#include "crfgen/model.hpp"

namespace crfgen {

// Source ids after input construction; target ids carry the two appended
// [eos] tokens and align to the first supervised_len encoder positions.
struct TrainingExample {
  std::vector<int> source_ids;
  std::vector<int> target_ids;
  int supervised_len = 0;
};

struct TrainConfig {
  double lambda = 1.0;  // weight of the context-aware term
  int window_c = 3;     // context half-width
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 30;
  int batch_size = 16;
  uint64_t seed = 1;
  // Stop once held-out token-kept F1 reaches this value; < 0 disables.
  double early_stop_f1 = -1.0;
  // Drop the two appended [eos] targets (the fixed-length model variant).
  bool append_eos = true;
  // 0 picks the hardware concurrency, 1 forces single-threaded batches.
  int n_threads = 0;

  void validate() const;
  std::map<std::string, std::string> echo() const;
};

// Aligns the target to the first len(target)+2 encoder positions. Returns
// nothing when the target does not fit (callers count and report skips).
std::optional<TrainingExample> make_example(
    const std::vector<std::string>& source,
    const std::vector<std::string>& target, const Vocabulary& vocab,
    const EncoderConfig& config, bool append_eos = true);

// Unlikelihood objective over a +-c window: raises p(y_i | h_i) and pushes
// down the probabilities of distinct neighboring tokens.
Tensor context_aware_loss(const Tensor& h, std::span<const int> target_ids,
                          const CrfParams& params, int c);

// crf_nll + lambda * context_aware_loss over the supervised positions.
Tensor total_loss(const Tensor& h, const TrainingExample& example,
                  const CrfParams& params, const TrainConfig& config);

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t step = 0;

  static AdamState init(const std::vector<std::pair<std::string, Tensor>>&);
};

// Standard bias-corrected Adam over the tensors' grad buffers.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, const TrainConfig& config);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_f1 = 0.0;
  double dev_rep2 = 0.0;
};

struct TrainResult {
  Model best_model;
  int best_epoch = -1;
  double best_f1 = 0.0;
  size_t skipped_examples = 0;
  std::vector<EpochStats> epochs;
};

// Full training loop: deterministic given config.seed, logs one line per
// epoch (epoch, train loss, dev F1, dev rep-2, tab-separated) and returns
// the checkpoint with the best held-out token-kept F1.
TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                  const Vocabulary& vocab, const ModelConfig& model_config,
                  const TrainConfig& train_config, std::ostream* log);

}  // namespace crfgen
