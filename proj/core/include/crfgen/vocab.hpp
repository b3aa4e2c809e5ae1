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
#include <unordered_map>
#include <vector>

#include "crfgen/common.hpp"

namespace crfgen {

// Token <-> id bijection. Ids 0-4 are always the reserved tokens
// [pad], [cls], [sep], [eos], [unk], in that order.
class Vocabulary {
 public:
  // Builds a vocabulary from the non-reserved token list; reserved tokens are
  // prepended automatically.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  // File format: UTF-8, one token per line, line number == id. Lines 0-4 must
  // hold the reserved tokens in order.
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  size_t size() const { return tokens_.size(); }

  // Id for a known token; unknown tokens map to [unk].
  int encode(const std::string& token) const;
  const std::string& decode(int id) const;
  bool contains(const std::string& token) const;

  std::vector<int> encode_all(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode_all(const std::vector<int>& ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace crfgen
