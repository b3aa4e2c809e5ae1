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

#include "crfgen/vocab.hpp"

#include <fstream>

namespace crfgen {

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  v.tokens_.reserve(tokens.size() + kNumReserved);
  for (int i = 0; i < kNumReserved; ++i) {
    v.tokens_.push_back(kReservedTokens[i]);
    v.index_[kReservedTokens[i]] = i;
  }
  for (const std::string& t : tokens) {
    if (v.index_.count(t)) {
      throw VocabError("duplicate token '" + t + "' in vocabulary");
    }
    v.index_[t] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(t);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file " + path);
  Vocabulary v;
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (id < kNumReserved && line != kReservedTokens[id]) {
      throw IoError(path + ":" + std::to_string(id + 1) + ": expected '" +
                    kReservedTokens[id] + "', got '" + line + "'");
    }
    if (v.index_.count(line)) {
      throw IoError(path + ":" + std::to_string(id + 1) +
                    ": duplicate token '" + line + "'");
    }
    v.index_[line] = id;
    v.tokens_.push_back(line);
    ++id;
  }
  if (id < kNumReserved) {
    throw IoError(path + ": vocabulary is missing reserved tokens");
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  for (const std::string& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing vocabulary file " + path);
}

int Vocabulary::encode(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::decode(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) {
    throw VocabError("id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(tokens_.size()) + " tokens");
  }
  return tokens_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

std::vector<int> Vocabulary::encode_all(
    const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(encode(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode_all(
    const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(decode(id));
  return out;
}

}  // namespace crfgen
