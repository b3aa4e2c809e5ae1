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

#include "crfgen/model.hpp"

namespace crfgen {

void ModelConfig::validate() const {
  encoder.validate();
  if (rank_d < 1) throw ConfigError("model: rank d must be >= 1");
  if (beam_k < 2) throw ConfigError("model: beam k must be >= 2");
}

Model Model::init(const ModelConfig& config, size_t vocab_size,
                  uint64_t seed) {
  config.validate();
  if (vocab_size <= kNumReserved) {
    throw ConfigError("model: vocabulary of " + std::to_string(vocab_size) +
                      " tokens holds nothing beyond the reserved ids");
  }
  Model m;
  m.config = config;
  Rng rng(seed);
  m.encoder = EncoderModel::init(config.encoder, vocab_size, rng);
  m.crf = CrfParams::init(static_cast<size_t>(config.encoder.d_model),
                          vocab_size, config.rank_d, config.beam_k, rng);
  return m;
}

std::vector<std::pair<std::string, Tensor>> Model::parameters() {
  auto out = encoder.parameters();
  for (auto& p : crf.parameters()) out.push_back(std::move(p));
  return out;
}

Model Model::clone() const {
  Model copy;
  copy.config = config;
  copy.encoder.config = encoder.config;
  copy.encoder.token_embedding = encoder.token_embedding.clone();
  copy.encoder.position_embedding = encoder.position_embedding.clone();
  for (const EncoderLayer& l : encoder.layers) {
    EncoderLayer c;
    c.attn.wq = l.attn.wq.clone();
    c.attn.bq = l.attn.bq.clone();
    c.attn.wk = l.attn.wk.clone();
    c.attn.bk = l.attn.bk.clone();
    c.attn.wv = l.attn.wv.clone();
    c.attn.bv = l.attn.bv.clone();
    c.attn.wo = l.attn.wo.clone();
    c.attn.bo = l.attn.bo.clone();
    c.ln1_gain = l.ln1_gain.clone();
    c.ln1_bias = l.ln1_bias.clone();
    c.ln2_gain = l.ln2_gain.clone();
    c.ln2_bias = l.ln2_bias.clone();
    c.w1 = l.w1.clone();
    c.b1 = l.b1.clone();
    c.w2 = l.w2.clone();
    c.b2 = l.b2.clone();
    copy.encoder.layers.push_back(std::move(c));
  }
  copy.crf.rank_d = crf.rank_d;
  copy.crf.beam_k = crf.beam_k;
  copy.crf.phi_weight = crf.phi_weight.clone();
  copy.crf.phi_bias = crf.phi_bias.clone();
  copy.crf.e1 = crf.e1.clone();
  copy.crf.e2 = crf.e2.clone();
  return copy;
}

std::map<std::string, std::string> Model::config_echo() const {
  std::map<std::string, std::string> echo;
  echo["encoder.n_layers"] = std::to_string(config.encoder.n_layers);
  echo["encoder.d_model"] = std::to_string(config.encoder.d_model);
  echo["encoder.n_heads"] = std::to_string(config.encoder.n_heads);
  echo["encoder.d_ffn"] = std::to_string(config.encoder.d_ffn);
  echo["encoder.max_len"] = std::to_string(config.encoder.max_len);
  echo["encoder.pad_to_max"] = config.encoder.pad_to_max ? "1" : "0";
  echo["encoder.plain_eq_mode"] = config.encoder.plain_eq_mode ? "1" : "0";
  echo["crf.rank_d"] = std::to_string(config.rank_d);
  echo["crf.beam_k"] = std::to_string(config.beam_k);
  echo["vocab_size"] = std::to_string(vocab_size());
  return echo;
}

}  // namespace crfgen
