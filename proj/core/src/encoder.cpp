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

#include "crfgen/encoder.hpp"

#include <cmath>

namespace crfgen {

namespace {

constexpr double kInitLo = -0.1;
constexpr double kInitHi = 0.1;

Tensor param(std::vector<size_t> shape, Rng& rng) {
  Tensor t = Tensor::uniform(std::move(shape), kInitLo, kInitHi, rng);
  t.set_requires_grad(true);
  return t;
}

Tensor zero_param(std::vector<size_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

Tensor ones_param(std::vector<size_t> shape) {
  Tensor t = Tensor::full(std::move(shape), 1.0);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

void EncoderConfig::validate() const {
  if (n_layers < 1) throw ConfigError("encoder: n_layers must be >= 1");
  if (d_model < 1 || n_heads < 1 || d_ffn < 1 || max_len < 2) {
    throw ConfigError("encoder: dimensions must be positive, max_len >= 2");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("encoder: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
}

EncoderModel EncoderModel::init(const EncoderConfig& config, size_t vocab_size,
                                Rng& rng) {
  config.validate();
  EncoderModel m;
  m.config = config;
  const size_t d = static_cast<size_t>(config.d_model);
  m.token_embedding = param({vocab_size, d}, rng);
  m.position_embedding = param({static_cast<size_t>(config.max_len), d}, rng);
  m.layers.resize(static_cast<size_t>(config.n_layers));
  for (EncoderLayer& layer : m.layers) {
    layer.attn.wq = param({d, d}, rng);
    layer.attn.bq = zero_param({d});
    layer.attn.wk = param({d, d}, rng);
    layer.attn.bk = zero_param({d});
    layer.attn.wv = param({d, d}, rng);
    layer.attn.bv = zero_param({d});
    layer.attn.wo = param({d, d}, rng);
    layer.attn.bo = zero_param({d});
    layer.ln1_gain = ones_param({d});
    layer.ln1_bias = zero_param({d});
    layer.ln2_gain = ones_param({d});
    layer.ln2_bias = zero_param({d});
    layer.w1 = param({d, static_cast<size_t>(config.d_ffn)}, rng);
    layer.b1 = zero_param({static_cast<size_t>(config.d_ffn)});
    layer.w2 = param({static_cast<size_t>(config.d_ffn), d}, rng);
    layer.b2 = zero_param({d});
  }
  return m;
}

std::vector<std::pair<std::string, Tensor>> EncoderModel::parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("encoder.token_embedding", token_embedding);
  out.emplace_back("encoder.position_embedding", position_embedding);
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    EncoderLayer& l = layers[i];
    out.emplace_back(p + "wq", l.attn.wq);
    out.emplace_back(p + "bq", l.attn.bq);
    out.emplace_back(p + "wk", l.attn.wk);
    out.emplace_back(p + "bk", l.attn.bk);
    out.emplace_back(p + "wv", l.attn.wv);
    out.emplace_back(p + "bv", l.attn.bv);
    out.emplace_back(p + "wo", l.attn.wo);
    out.emplace_back(p + "bo", l.attn.bo);
    out.emplace_back(p + "ln1_gain", l.ln1_gain);
    out.emplace_back(p + "ln1_bias", l.ln1_bias);
    out.emplace_back(p + "ln2_gain", l.ln2_gain);
    out.emplace_back(p + "ln2_bias", l.ln2_bias);
    out.emplace_back(p + "w1", l.w1);
    out.emplace_back(p + "b1", l.b1);
    out.emplace_back(p + "w2", l.w2);
    out.emplace_back(p + "b2", l.b2);
  }
  return out;
}

std::vector<int> build_input(const std::vector<std::string>& source,
                             const Vocabulary& vocab,
                             const EncoderConfig& config, TaskKind task_kind) {
  const size_t needed = source.size() + 2;
  if (needed > static_cast<size_t>(config.max_len)) {
    throw ContractError("build_input: source of " +
                        std::to_string(source.size()) +
                        " tokens plus [cls]/[sep] exceeds max_len " +
                        std::to_string(config.max_len));
  }
  std::vector<int> ids;
  ids.reserve(task_kind == TaskKind::general
                  ? static_cast<size_t>(config.max_len)
                  : needed);
  ids.push_back(kClsId);
  for (const std::string& tok : source) ids.push_back(vocab.encode(tok));
  ids.push_back(kSepId);
  if (task_kind == TaskKind::general) {
    while (ids.size() < static_cast<size_t>(config.max_len)) {
      ids.push_back(kPadId);
    }
  }
  return ids;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in,
                            const Tensor& v_in,
                            const std::vector<uint8_t>& key_mask,
                            const AttentionParams& params, int n_heads) {
  const size_t d = q_in.dim(1);
  if (k_in.dim(1) != d || v_in.dim(1) != d) {
    throw ShapeError("multi_head_attention: widths disagree, " +
                     shape_to_string(q_in.shape()) + " vs " +
                     shape_to_string(k_in.shape()) + " vs " +
                     shape_to_string(v_in.shape()));
  }
  if (d % static_cast<size_t>(n_heads) != 0) {
    throw ConfigError("multi_head_attention: width not divisible by heads");
  }
  const size_t d_head = d / static_cast<size_t>(n_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));

  Tensor q = ops::add_row_broadcast(ops::matmul(q_in, params.wq), params.bq);
  Tensor k = ops::add_row_broadcast(ops::matmul(k_in, params.wk), params.bk);
  Tensor v = ops::add_row_broadcast(ops::matmul(v_in, params.wv), params.bv);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const size_t off = static_cast<size_t>(h) * d_head;
    Tensor qh = ops::slice_cols(q, off, d_head);
    Tensor kh = ops::slice_cols(k, off, d_head);
    Tensor vh = ops::slice_cols(v, off, d_head);
    Tensor scores = ops::scale(ops::matmul_nt(qh, kh), inv_sqrt);
    Tensor weights = ops::masked_softmax(scores, key_mask);
    heads.push_back(ops::matmul(weights, vh));
  }
  Tensor merged = ops::concat_cols(heads);
  return ops::add_row_broadcast(ops::matmul(merged, params.wo), params.bo);
}

Tensor encode(const EncoderModel& model, std::span<const int> ids) {
  const size_t t = ids.size();
  const size_t v = model.vocab_size();
  if (t == 0) throw ContractError("encode: empty input");
  if (t > model.position_embedding.dim(0)) {
    throw ContractError("encode: input of length " + std::to_string(t) +
                        " exceeds max_len " +
                        std::to_string(model.position_embedding.dim(0)));
  }
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= v) {
      throw VocabError("encode: id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(v));
    }
  }
  std::vector<uint8_t> key_mask(t);
  for (size_t i = 0; i < t; ++i) key_mask[i] = ids[i] != kPadId;

  Tensor x = ops::add(ops::embedding_lookup(model.token_embedding, ids),
                      ops::slice_rows(model.position_embedding, 0, t));

  for (const EncoderLayer& layer : model.layers) {
    if (model.config.plain_eq_mode) {
      Tensor attn =
          multi_head_attention(x, x, x, key_mask, layer.attn,
                               model.config.n_heads);
      Tensor hidden =
          ops::relu(ops::add_row_broadcast(ops::matmul(attn, layer.w1),
                                           layer.b1));
      x = ops::add_row_broadcast(ops::matmul(hidden, layer.w2), layer.b2);
    } else {
      Tensor normed1 = ops::layer_norm(x, layer.ln1_gain, layer.ln1_bias);
      Tensor attn = multi_head_attention(normed1, normed1, normed1, key_mask,
                                         layer.attn, model.config.n_heads);
      x = ops::add(x, attn);
      Tensor normed2 = ops::layer_norm(x, layer.ln2_gain, layer.ln2_bias);
      Tensor hidden =
          ops::relu(ops::add_row_broadcast(ops::matmul(normed2, layer.w1),
                                           layer.b1));
      Tensor ffn =
          ops::add_row_broadcast(ops::matmul(hidden, layer.w2), layer.b2);
      x = ops::add(x, ffn);
    }
  }
  return x;
}

}  // namespace crfgen
