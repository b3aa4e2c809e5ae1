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

#include "crfgen/decode.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace crfgen {

namespace {

using Clock = std::chrono::steady_clock;

int64_t elapsed_ns(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() -
                                                              start)
      .count();
}

// Emission scores for the first `rows` positions, computed outside the tape:
// decoding is read-only on frozen parameters.
void emission_prefix(const Tensor& h, const CrfParams& params, size_t rows,
                     std::vector<double>& out) {
  const size_t d = h.dim(1);
  const size_t v = params.vocab_size();
  const double* ph = h.data();
  const double* pw = params.phi_weight.data();
  const double* pb = params.phi_bias.data();
  out.assign(rows * v, 0.0);
  for (size_t i = 0; i < rows; ++i) {
    double* orow = out.data() + i * v;
    for (size_t j = 0; j < v; ++j) orow[j] = pb[j];
    const double* hrow = ph + i * d;
    for (size_t l = 0; l < d; ++l) {
      const double hv = hrow[l];
      const double* wrow = pw + l * v;
      for (size_t j = 0; j < v; ++j) orow[j] += hv * wrow[j];
    }
  }
}

DecodeResult decode_prefix(const Tensor& h, const CrfParams& params, int k,
                           size_t rows) {
  const auto start = Clock::now();
  std::vector<double> emissions;
  emission_prefix(h, params, rows, emissions);
  Lattice lattice = build_lattice(emissions, rows, params.vocab_size(), k);
  CrfWorkspace ws;
  ViterbiResult vr = viterbi(lattice, params, ws);
  DecodeResult result;
  result.trajectory = std::move(vr.labels);
  result.output = strip_reserved(result.trajectory);
  result.score = vr.score;
  result.latency_ns = elapsed_ns(start);
  return result;
}

}  // namespace

void DecodeConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError("decode: alpha " + std::to_string(alpha) +
                      " outside (0, 1]");
  }
  if (beam_k < 2) {
    throw ConfigError("decode: beam k " + std::to_string(beam_k) +
                      " must be >= 2");
  }
  const bool fixed = strategy == DecodeStrategy::fixed_length;
  if (fixed && fixed_lengths.empty()) {
    throw ConfigError("decode: fixed_length strategy needs length candidates");
  }
  if (!fixed && !fixed_lengths.empty()) {
    throw ConfigError("decode: length candidates only apply to fixed_length");
  }
}

std::string DecodeConfig::to_string() const {
  std::ostringstream os;
  switch (strategy) {
    case DecodeStrategy::dynamic:
      os << "dynamic";
      break;
    case DecodeStrategy::ratio_first:
      os << "ratio_first:alpha=" << alpha;
      break;
    case DecodeStrategy::fixed_length:
      os << "fixed_length:lengths=";
      for (size_t i = 0; i < fixed_lengths.size(); ++i) {
        if (i) os << ",";
        os << fixed_lengths[i];
      }
      break;
  }
  os << ",k=" << beam_k;
  return os.str();
}

DecodeConfig parse_decode_config(const std::string& text) {
  DecodeConfig config;
  std::string head = text;
  std::string args;
  if (auto colon = text.find(':'); colon != std::string::npos) {
    head = text.substr(0, colon);
    args = text.substr(colon + 1);
  }
  if (head == "dynamic") {
    config.strategy = DecodeStrategy::dynamic;
  } else if (head == "ratio_first") {
    config.strategy = DecodeStrategy::ratio_first;
  } else if (head == "fixed_length") {
    config.strategy = DecodeStrategy::fixed_length;
  } else {
    throw ConfigError("decode: unknown strategy '" + head + "'");
  }
  std::stringstream ss(args);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    auto eq = part.find('=');
    if (eq == std::string::npos) {
      // bare numbers extend the length list
      config.fixed_lengths.push_back(std::stoi(part));
      continue;
    }
    const std::string key = part.substr(0, eq);
    const std::string value = part.substr(eq + 1);
    if (key == "alpha") {
      config.alpha = std::stod(value);
    } else if (key == "k") {
      config.beam_k = std::stoi(value);
    } else if (key == "lengths") {
      config.fixed_lengths.push_back(std::stoi(value));
    } else {
      throw ConfigError("decode: unknown option '" + key + "'");
    }
  }
  config.validate();
  return config;
}

std::vector<int> strip_reserved(const std::vector<int>& trajectory) {
  std::vector<int> out;
  out.reserve(trajectory.size());
  for (int id : trajectory) {
    if (!is_reserved_id(id)) out.push_back(id);
  }
  return out;
}

DecodeResult decode_dynamic(const Tensor& h, const CrfParams& params, int k) {
  return decode_prefix(h, params, k, h.dim(0));
}

DecodeResult decode_ratio_first(const Tensor& h, const CrfParams& params,
                                int k, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError("decode_ratio_first: alpha " + std::to_string(alpha) +
                      " outside (0, 1]");
  }
  const size_t t = h.dim(0);
  const double scaled = alpha * static_cast<double>(t);
  const long raw = round_half_even(scaled);
  if (raw < 1) {
    std::cerr << "warning: alpha * T = " << scaled
              << " rounds below 1, decoding a single position\n";
  }
  int rows = static_cast<int>(raw < 1 ? 1 : raw);
  if (static_cast<size_t>(rows) > t) rows = static_cast<int>(t);
  return decode_prefix(h, params, k, static_cast<size_t>(rows));
}

DecodeResult decode_fixed_length(const Tensor& h, const CrfParams& params,
                                 int k, int l) {
  const size_t t = h.dim(0);
  if (l < 1 || static_cast<size_t>(l) > t) {
    throw ContractError("decode_fixed_length: length " + std::to_string(l) +
                        " outside [1, " + std::to_string(t) + "]");
  }
  const auto start = Clock::now();
  std::vector<double> emissions;
  emission_prefix(h, params, static_cast<size_t>(l), emissions);
  Lattice lattice = build_lattice_without_eos(
      emissions, static_cast<size_t>(l), params.vocab_size(), k);
  CrfWorkspace ws;
  ViterbiResult vr = viterbi(lattice, params, ws);
  DecodeResult result;
  result.trajectory = std::move(vr.labels);
  result.output = strip_reserved(result.trajectory);
  result.score = vr.score;
  result.latency_ns = elapsed_ns(start);
  return result;
}

DecodeResult decode_lpd(const Tensor& h, const CrfParams& params, int k,
                        const std::vector<int>& lengths) {
  if (lengths.empty()) throw ContractError("decode_lpd: no length candidates");
  const size_t t = h.dim(0);
  size_t max_l = 0;
  for (int l : lengths) {
    if (l < 1 || static_cast<size_t>(l) > t) {
      throw ContractError("decode_lpd: length " + std::to_string(l) +
                          " outside [1, " + std::to_string(t) + "]");
    }
    max_l = std::max(max_l, static_cast<size_t>(l));
  }

  const auto start = Clock::now();
  std::vector<double> emissions;
  emission_prefix(h, params, max_l, emissions);
  CrfWorkspace ws;
  DecodeResult best;
  double best_norm = 0.0;
  int best_l = 0;
  const size_t vocab = params.vocab_size();
  for (int l : lengths) {
    Lattice lattice = build_lattice_without_eos(
        {emissions.data(), static_cast<size_t>(l) * vocab},
        static_cast<size_t>(l), vocab, k);
    ViterbiResult vr = viterbi(lattice, params, ws);
    const double norm = vr.score / static_cast<double>(l);
    if (best_l == 0 || norm > best_norm ||
        (norm == best_norm && l < best_l)) {
      best_norm = norm;
      best_l = l;
      best.trajectory = std::move(vr.labels);
      best.score = vr.score;
    }
  }
  best.output = strip_reserved(best.trajectory);
  best.latency_ns = elapsed_ns(start);
  return best;
}

DecodeResult run_decode(const Tensor& h, const CrfParams& params,
                        const DecodeConfig& config) {
  config.validate();
  switch (config.strategy) {
    case DecodeStrategy::dynamic:
      return decode_dynamic(h, params, config.beam_k);
    case DecodeStrategy::ratio_first:
      return decode_ratio_first(h, params, config.beam_k, config.alpha);
    case DecodeStrategy::fixed_length:
      if (config.fixed_lengths.size() == 1) {
        return decode_fixed_length(h, params, config.beam_k,
                                   config.fixed_lengths[0]);
      }
      return decode_lpd(h, params, config.beam_k, config.fixed_lengths);
  }
  throw ContractError("run_decode: unreachable strategy");
}

void write_decode_file(const std::string& path,
                       const std::vector<DecodeFileEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write decode file " + path);
  char score_buf[64];
  for (const DecodeFileEntry& e : entries) {
    std::snprintf(score_buf, sizeof(score_buf), "%.6f", e.score);
    out << e.id << '\t';
    for (size_t i = 0; i < e.output.size(); ++i) {
      if (i) out << ' ';
      out << e.output[i];
    }
    out << '\t' << score_buf << '\t' << e.latency_ns << '\n';
  }
  if (!out) throw IoError("failed writing decode file " + path);
}

std::vector<DecodeFileEntry> read_decode_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open decode file " + path);
  std::vector<DecodeFileEntry> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t pos = 0;
    while (true) {
      size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (fields.size() != 4) {
      throw IoError(path + ":" + std::to_string(line_no) + ": expected " +
                    "4 tab-separated fields, got " +
                    std::to_string(fields.size()));
    }
    DecodeFileEntry e;
    try {
      e.id = std::stoll(fields[0]);
      e.score = std::stod(fields[2]);
      e.latency_ns = std::stoll(fields[3]);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(line_no) +
                    ": malformed numeric field");
    }
    std::istringstream ts(fields[1]);
    std::string tok;
    while (ts >> tok) e.output.push_back(tok);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace crfgen
