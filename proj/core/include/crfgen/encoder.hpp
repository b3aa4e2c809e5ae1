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

#include <span>
#include <string>
#include <vector>

#include "crfgen/tensor.hpp"
#include "crfgen/vocab.hpp"

namespace crfgen {

// Whether [pad] tokens are appended up to max_len. Length-reducing tasks
// (the output is known to be shorter than the source) skip the padding.
enum class TaskKind { length_reducing, general };

struct EncoderConfig {
  int n_layers = 4;
  int d_model = 128;
  int n_heads = 4;
  int d_ffn = 256;
  int max_len = 64;
  bool pad_to_max = false;
  // Disables residual connections and layer normalization so a layer computes
  // exactly FFN(MultiHead(x, x, x)); used by the hand-computed oracles.
  bool plain_eq_mode = false;

  void validate() const;
  TaskKind task_kind() const {
    return pad_to_max ? TaskKind::general : TaskKind::length_reducing;
  }
};

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct EncoderLayer {
  AttentionParams attn;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;  // FFN(x) = relu(x*w1 + b1)*w2 + b2
};

struct EncoderModel {
  EncoderConfig config;
  Tensor token_embedding;     // [|V| x d_model]
  Tensor position_embedding;  // [max_len x d_model]
  std::vector<EncoderLayer> layers;

  static EncoderModel init(const EncoderConfig& config, size_t vocab_size,
                           Rng& rng);

  size_t vocab_size() const { return token_embedding.dim(0); }
  // Ordered (name, tensor) pairs over every learnable parameter.
  std::vector<std::pair<std::string, Tensor>> parameters();
};

// [cls] + source + [sep], padded with [pad] to max_len for general tasks.
// Throws ContractError when the source does not fit.
std::vector<int> build_input(const std::vector<std::string>& source,
                             const Vocabulary& vocab,
                             const EncoderConfig& config, TaskKind task_kind);

// Scaled dot-product attention with per-head projections; key positions with
// key_mask[j] == 0 receive zero attention weight.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in,
                            const Tensor& v_in,
                            const std::vector<uint8_t>& key_mask,
                            const AttentionParams& params, int n_heads);

// Hidden states H, shape [T x d_model], for the padded id sequence.
Tensor encode(const EncoderModel& model, std::span<const int> ids);

}  // namespace crfgen
