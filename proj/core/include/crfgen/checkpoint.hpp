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

#include "crfgen/model.hpp"

namespace crfgen {

// Self-describing binary container: magic + version tag, a config echo of
// key=value lines, then named tensors as (name, rank, dims, little-endian
// 64-bit float payload). Identical models serialize to identical bytes.
void save_checkpoint(const std::string& path, Model& model,
                     const std::map<std::string, std::string>& extra_echo = {});

struct LoadedCheckpoint {
  Model model;
  std::map<std::string, std::string> config_echo;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace crfgen
