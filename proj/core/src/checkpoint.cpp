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

#include "crfgen/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace crfgen {

namespace {

constexpr char kMagic[8] = {'C', 'R', 'F', 'G', 'E', 'N', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_u64(out, bits);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError(path + ": truncated checkpoint");
  }
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError(path + ": truncated checkpoint");
  }
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in, const std::string& path) {
  const uint64_t bits = read_u64(in, path);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string echo_to_text(const std::map<std::string, std::string>& echo) {
  std::string text;
  for (const auto& [k, v] : echo) {
    text += k;
    text += '=';
    text += v;
    text += '\n';
  }
  return text;
}

std::map<std::string, std::string> echo_from_text(const std::string& text,
                                                  const std::string& path) {
  std::map<std::string, std::string> echo;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(path + ": malformed config echo line '" + line + "'");
    }
    echo[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return echo;
}

int echo_int(const std::map<std::string, std::string>& echo,
             const std::string& key, const std::string& path) {
  auto it = echo.find(key);
  if (it == echo.end()) {
    throw IoError(path + ": checkpoint echo is missing '" + key + "'");
  }
  return std::stoi(it->second);
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model,
                     const std::map<std::string, std::string>& extra_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);

  std::map<std::string, std::string> echo = model.config_echo();
  for (const auto& [k, v] : extra_echo) echo[k] = v;
  const std::string echo_text = echo_to_text(echo);

  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u64(out, echo_text.size());
  out.write(echo_text.data(), static_cast<std::streamsize>(echo_text.size()));

  auto params = model.parameters();
  write_u32(out, static_cast<uint32_t>(params.size()));
  for (auto& [name, tensor] : params) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(tensor.rank()));
    for (size_t d : tensor.shape()) write_u64(out, d);
    for (size_t i = 0; i < tensor.size(); ++i) write_f64(out, tensor.data()[i]);
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);

  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path + ": not a checkpoint file");
  }
  const uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(version));
  }
  const uint64_t echo_len = read_u64(in, path);
  std::string echo_text(echo_len, '\0');
  if (!in.read(echo_text.data(), static_cast<std::streamsize>(echo_len))) {
    throw IoError(path + ": truncated checkpoint");
  }
  auto echo = echo_from_text(echo_text, path);

  ModelConfig config;
  config.encoder.n_layers = echo_int(echo, "encoder.n_layers", path);
  config.encoder.d_model = echo_int(echo, "encoder.d_model", path);
  config.encoder.n_heads = echo_int(echo, "encoder.n_heads", path);
  config.encoder.d_ffn = echo_int(echo, "encoder.d_ffn", path);
  config.encoder.max_len = echo_int(echo, "encoder.max_len", path);
  config.encoder.pad_to_max = echo_int(echo, "encoder.pad_to_max", path) != 0;
  config.encoder.plain_eq_mode =
      echo_int(echo, "encoder.plain_eq_mode", path) != 0;
  config.rank_d = echo_int(echo, "crf.rank_d", path);
  config.beam_k = echo_int(echo, "crf.beam_k", path);
  const int vocab_size = echo_int(echo, "vocab_size", path);

  LoadedCheckpoint loaded;
  loaded.model = Model::init(config, static_cast<size_t>(vocab_size), 0);
  loaded.config_echo = std::move(echo);

  auto params = loaded.model.parameters();
  std::map<std::string, Tensor*> by_name;
  for (auto& [name, tensor] : params) by_name[name] = &tensor;

  const uint32_t count = read_u32(in, path);
  if (count != params.size()) {
    throw IoError(path + ": checkpoint holds " + std::to_string(count) +
                  " tensors, model expects " + std::to_string(params.size()));
  }
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw IoError(path + ": truncated checkpoint");
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw IoError(path + ": unexpected tensor '" + name + "'");
    }
    Tensor& tensor = *it->second;
    const uint32_t rank = read_u32(in, path);
    std::vector<size_t> dims(rank);
    for (uint32_t d = 0; d < rank; ++d) {
      dims[d] = static_cast<size_t>(read_u64(in, path));
    }
    if (dims != tensor.shape()) {
      throw IoError(path + ": tensor '" + name + "' has shape " +
                    shape_to_string(dims) + ", model expects " +
                    shape_to_string(tensor.shape()));
    }
    for (size_t i = 0; i < tensor.size(); ++i) {
      tensor.data()[i] = read_f64(in, path);
    }
  }
  return loaded;
}

}  // namespace crfgen
