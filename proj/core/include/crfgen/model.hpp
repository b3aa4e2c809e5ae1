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

#include <map>
#include <string>

#include "crfgen/crf.hpp"
#include "crfgen/encoder.hpp"

namespace crfgen {

struct ModelConfig {
  EncoderConfig encoder;
  int rank_d = 32;
  int beam_k = 256;

  void validate() const;
};

// Encoder plus CRF head; everything the decode and training paths share.
struct Model {
  ModelConfig config;
  EncoderModel encoder;
  CrfParams crf;

  static Model init(const ModelConfig& config, size_t vocab_size,
                    uint64_t seed);

  size_t vocab_size() const { return crf.vocab_size(); }
  std::vector<std::pair<std::string, Tensor>> parameters();
  // Deep copy (used to keep the best checkpoint while training continues).
  Model clone() const;

  // Flat key=value view of the configuration, echoed into artifacts.
  std::map<std::string, std::string> config_echo() const;
};

}  // namespace crfgen
