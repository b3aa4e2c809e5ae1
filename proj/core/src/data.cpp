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

#include "crfgen/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace crfgen {

namespace {

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
  return buf;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

// Compression sources mix content tokens (kept by the target) and filler
// tokens (dropped); which class a token belongs to is visible from the token
// itself, so the compression is deterministic given the source.
Corpus::Example gen_compression(const TaskSpec& spec, int n_content,
                                int n_filler, Rng& rng) {
  Corpus::Example ex;
  const int len = rng.uniform_int(spec.min_len, spec.max_len);
  std::vector<bool> is_content(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) {
    if (i > 0 && rng.bernoulli(spec.repetition_bias)) {
      ex.source.push_back(ex.source.back());
      is_content[static_cast<size_t>(i)] = is_content[static_cast<size_t>(i - 1)];
      continue;
    }
    if (rng.bernoulli(spec.keep_ratio)) {
      ex.source.push_back(numbered("k", rng.uniform_int(0, n_content - 1)));
      is_content[static_cast<size_t>(i)] = true;
    } else {
      ex.source.push_back(numbered("f", rng.uniform_int(0, n_filler - 1)));
      is_content[static_cast<size_t>(i)] = false;
    }
  }
  for (int i = 0; i < len; ++i) {
    if (is_content[static_cast<size_t>(i)]) ex.target.push_back(ex.source[i]);
  }
  // Length-reducing contract: the target must be strictly shorter.
  if (ex.target.size() == ex.source.size()) ex.target.pop_back();
  return ex;
}

Corpus::Example gen_noisy_copy(const TaskSpec& spec, Rng& rng) {
  Corpus::Example ex;
  const int len = rng.uniform_int(spec.min_len, spec.max_len);
  for (int i = 0; i < len; ++i) {
    if (i > 0 && rng.bernoulli(spec.repetition_bias)) {
      ex.source.push_back(ex.source.back());
    } else {
      ex.source.push_back(numbered("w", rng.uniform_int(0, spec.vocab_size - 1)));
    }
  }
  for (int i = 0; i < len; ++i) {
    if (rng.bernoulli(spec.keep_ratio)) {
      ex.target.push_back(ex.source[static_cast<size_t>(i)]);
    } else {
      ex.target.push_back(numbered("w", rng.uniform_int(0, spec.vocab_size - 1)));
    }
  }
  return ex;
}

Corpus::Example gen_substitution(const TaskSpec& spec,
                                 const std::vector<int>& mapping, Rng& rng) {
  Corpus::Example ex;
  const int len = rng.uniform_int(spec.min_len, spec.max_len);
  std::vector<int> raw(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) {
    if (i > 0 && rng.bernoulli(spec.repetition_bias)) {
      raw[static_cast<size_t>(i)] = raw[static_cast<size_t>(i - 1)];
    } else {
      raw[static_cast<size_t>(i)] = rng.uniform_int(0, spec.vocab_size - 1);
    }
    ex.source.push_back(numbered("w", raw[static_cast<size_t>(i)]));
  }
  std::vector<int> mapped(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    mapped[i] = mapping[static_cast<size_t>(raw[i])];
  }
  // Bounded local reordering: non-overlapping adjacent swaps.
  for (size_t i = 0; i + 1 < mapped.size(); ++i) {
    if (rng.bernoulli(1.0 - spec.keep_ratio)) {
      std::swap(mapped[i], mapped[i + 1]);
      ++i;
    }
  }
  for (int v : mapped) ex.target.push_back(numbered("w", v));
  return ex;
}

}  // namespace

TaskType parse_task_type(const std::string& name) {
  if (name == "compression") return TaskType::compression;
  if (name == "noisy-copy") return TaskType::noisy_copy;
  if (name == "substitution-translation") {
    return TaskType::substitution_translation;
  }
  throw ConfigError("unknown task '" + name + "'");
}

std::string task_type_name(TaskType t) {
  switch (t) {
    case TaskType::compression:
      return "compression";
    case TaskType::noisy_copy:
      return "noisy-copy";
    case TaskType::substitution_translation:
      return "substitution-translation";
  }
  return "?";
}

void TaskSpec::validate() const {
  if (vocab_size < 10) throw ConfigError("task: vocab_size must be >= 10");
  if (min_len < 1 || max_len < min_len) {
    throw ConfigError("task: need 1 <= min_len <= max_len");
  }
  if (!(keep_ratio > 0.0 && keep_ratio < 1.0)) {
    throw ConfigError("task: keep_ratio must lie in (0, 1)");
  }
  if (repetition_bias < 0.0 || repetition_bias > 1.0) {
    throw ConfigError("task: repetition_bias must lie in [0, 1]");
  }
  if (n_examples < 1) throw ConfigError("task: n_examples must be >= 1");
}

Corpus generate(const TaskSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Corpus corpus;
  corpus.examples.reserve(static_cast<size_t>(spec.n_examples));

  int n_content = 0, n_filler = 0;
  std::vector<int> mapping;
  if (spec.kind == TaskType::compression) {
    n_content = std::max(
        1, static_cast<int>(std::lround(spec.vocab_size * spec.keep_ratio)));
    n_filler = std::max(1, spec.vocab_size - n_content);
  } else if (spec.kind == TaskType::substitution_translation) {
    mapping.resize(static_cast<size_t>(spec.vocab_size));
    for (int i = 0; i < spec.vocab_size; ++i) {
      mapping[static_cast<size_t>(i)] = i;
    }
    rng.shuffle(mapping);
  }

  for (int e = 0; e < spec.n_examples; ++e) {
    switch (spec.kind) {
      case TaskType::compression:
        corpus.examples.push_back(
            gen_compression(spec, n_content, n_filler, rng));
        break;
      case TaskType::noisy_copy:
        corpus.examples.push_back(gen_noisy_copy(spec, rng));
        break;
      case TaskType::substitution_translation:
        corpus.examples.push_back(gen_substitution(spec, mapping, rng));
        break;
    }
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path);
  Corpus corpus;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError(path + ":" + std::to_string(line_no) +
                    ": missing tab separator between source and target");
    }
    Corpus::Example ex;
    ex.source = split_tokens(line.substr(0, tab));
    ex.target = split_tokens(line.substr(tab + 1));
    if (ex.source.empty()) {
      throw IoError(path + ":" + std::to_string(line_no) + ": empty source");
    }
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file " + path);
  for (const Corpus::Example& ex : corpus.examples) {
    for (size_t i = 0; i < ex.source.size(); ++i) {
      if (i) out << ' ';
      out << ex.source[i];
    }
    out << '\t';
    for (size_t i = 0; i < ex.target.size(); ++i) {
      if (i) out << ' ';
      out << ex.target[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing corpus file " + path);
}

Vocabulary build_vocab(const Corpus& corpus, size_t max_size) {
  if (max_size <= kNumReserved) {
    throw ConfigError("build_vocab: max_size must exceed " +
                      std::to_string(kNumReserved));
  }
  std::map<std::string, size_t> freq;
  for (const Corpus::Example& ex : corpus.examples) {
    for (const std::string& t : ex.source) ++freq[t];
    for (const std::string& t : ex.target) ++freq[t];
  }
  std::vector<std::pair<std::string, size_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  const size_t room = max_size - kNumReserved;
  for (const auto& [tok, n] : items) {
    if (tokens.size() == room) break;
    tokens.push_back(tok);
  }
  return Vocabulary::from_tokens(tokens);
}

double CorpusStats::ratio_percentile(double p) const {
  if (ratios.empty()) return 0.0;
  const double rank = p / 100.0 * static_cast<double>(ratios.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = std::min(lo + 1, ratios.size() - 1);
  const double frac = rank - std::floor(rank);
  return ratios[lo] * (1.0 - frac) + ratios[hi] * frac;
}

std::string CorpusStats::to_text() const {
  std::ostringstream os;
  os << "examples: " << examples << "\n";
  os << "source_len_min: " << min_source_len << "\n";
  os << "source_len_max: " << max_source_len << "\n";
  os << "target_len_min: " << min_target_len << "\n";
  os << "target_len_max: " << max_target_len << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", mean_ratio);
  os << "mean_target_source_ratio: " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f", ratio_percentile(99.0));
  os << "ratio_p99: " << buf << "\n";
  for (size_t b = 0; b < ratio_histogram.size(); ++b) {
    std::snprintf(buf, sizeof(buf), "ratio_hist_%.2f_%.2f",
                  0.05 * static_cast<double>(b),
                  0.05 * static_cast<double>(b + 1));
    os << buf << ": " << ratio_histogram[b] << "\n";
  }
  return os.str();
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  stats.examples = corpus.size();
  if (corpus.examples.empty()) return stats;
  stats.min_source_len = stats.max_source_len = corpus.examples[0].source.size();
  stats.min_target_len = stats.max_target_len = corpus.examples[0].target.size();
  double ratio_sum = 0.0;
  for (const Corpus::Example& ex : corpus.examples) {
    stats.min_source_len = std::min(stats.min_source_len, ex.source.size());
    stats.max_source_len = std::max(stats.max_source_len, ex.source.size());
    stats.min_target_len = std::min(stats.min_target_len, ex.target.size());
    stats.max_target_len = std::max(stats.max_target_len, ex.target.size());
    const double ratio = static_cast<double>(ex.target.size()) /
                         static_cast<double>(ex.source.size());
    stats.ratios.push_back(ratio);
    ratio_sum += ratio;
    const size_t bucket = static_cast<size_t>(std::floor(ratio / 0.05));
    if (bucket >= stats.ratio_histogram.size()) {
      stats.ratio_histogram.resize(bucket + 1, 0);
    }
    ++stats.ratio_histogram[bucket];
  }
  stats.mean_ratio = ratio_sum / static_cast<double>(corpus.size());
  std::sort(stats.ratios.begin(), stats.ratios.end());
  return stats;
}

}  // namespace crfgen
