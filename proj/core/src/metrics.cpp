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

#include "crfgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "crfgen/common.hpp"

namespace crfgen {

namespace {

// n-gram keys as joined strings; '\x1f' cannot appear in tokens.
std::map<std::string, int> ngram_counts(const Tokens& tokens, int n) {
  std::map<std::string, int> counts;
  if (tokens.size() < static_cast<size_t>(n)) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

double f1_from_counts(double matched, double cand_total, double ref_total) {
  if (cand_total == 0.0 && ref_total == 0.0) return 100.0;
  if (cand_total == 0.0 || ref_total == 0.0) return 0.0;
  const double p = matched / cand_total;
  const double r = matched / ref_total;
  if (p + r == 0.0) return 0.0;
  return 100.0 * 2.0 * p * r / (p + r);
}

size_t lcs_length(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Greedy leftmost alignment of `sub` as a subsequence of `source`; returns
// the matched source indices or nothing if `sub` is not a subsequence.
std::optional<std::vector<size_t>> align_subsequence(const Tokens& sub,
                                                     const Tokens& source) {
  std::vector<size_t> idx;
  idx.reserve(sub.size());
  size_t s = 0;
  for (const std::string& tok : sub) {
    while (s < source.size() && source[s] != tok) ++s;
    if (s == source.size()) return std::nullopt;
    idx.push_back(s++);
  }
  return idx;
}

}  // namespace

double rep_n(const Tokens& output, int n) {
  if (n < 1) throw ContractError("rep_n: n must be >= 1");
  if (output.size() < static_cast<size_t>(n)) return 0.0;
  const size_t total = output.size() - static_cast<size_t>(n) + 1;
  const size_t unique = ngram_counts(output, n).size();
  return 100.0 * (1.0 - static_cast<double>(unique) /
                            static_cast<double>(total));
}

double rouge_n(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1) throw ContractError("rouge_n: n must be >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  double cand_total = 0.0, ref_total = 0.0, matched = 0.0;
  for (const auto& [k, c] : cand) cand_total += c;
  for (const auto& [k, c] : ref) ref_total += c;
  for (const auto& [k, c] : cand) {
    auto it = ref.find(k);
    if (it != ref.end()) matched += std::min(c, it->second);
  }
  return f1_from_counts(matched, cand_total, ref_total);
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  return f1_from_counts(lcs, static_cast<double>(candidate.size()),
                        static_cast<double>(reference.size()));
}

double token_kept_f1(const Tokens& candidate, const Tokens& reference,
                     const Tokens& source, bool* multiset_fallback) {
  if (multiset_fallback) *multiset_fallback = false;
  const auto cand_idx = align_subsequence(candidate, source);
  const auto ref_idx = align_subsequence(reference, source);
  if (cand_idx && ref_idx) {
    double matched = 0.0;
    size_t a = 0, b = 0;
    while (a < cand_idx->size() && b < ref_idx->size()) {
      if ((*cand_idx)[a] == (*ref_idx)[b]) {
        ++matched;
        ++a;
        ++b;
      } else if ((*cand_idx)[a] < (*ref_idx)[b]) {
        ++a;
      } else {
        ++b;
      }
    }
    return f1_from_counts(matched, static_cast<double>(candidate.size()),
                          static_cast<double>(reference.size()));
  }
  if (multiset_fallback) *multiset_fallback = true;
  const auto cand = ngram_counts(candidate, 1);
  const auto ref = ngram_counts(reference, 1);
  double matched = 0.0;
  for (const auto& [k, c] : cand) {
    auto it = ref.find(k);
    if (it != ref.end()) matched += std::min(c, it->second);
  }
  return f1_from_counts(matched, static_cast<double>(candidate.size()),
                        static_cast<double>(reference.size()));
}

double bleu(const std::vector<Tokens>& candidates,
            const std::vector<Tokens>& references, int max_n) {
  if (candidates.size() != references.size()) {
    throw ContractError("bleu: " + std::to_string(candidates.size()) +
                        " candidates vs " + std::to_string(references.size()) +
                        " references");
  }
  if (candidates.empty()) return 0.0;
  double cand_len = 0.0, ref_len = 0.0;
  std::vector<double> matched(static_cast<size_t>(max_n), 0.0);
  std::vector<double> total(static_cast<size_t>(max_n), 0.0);
  for (size_t e = 0; e < candidates.size(); ++e) {
    cand_len += static_cast<double>(candidates[e].size());
    ref_len += static_cast<double>(references[e].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto cand = ngram_counts(candidates[e], n);
      const auto ref = ngram_counts(references[e], n);
      for (const auto& [k, c] : cand) {
        total[static_cast<size_t>(n - 1)] += c;
        auto it = ref.find(k);
        if (it != ref.end()) {
          matched[static_cast<size_t>(n - 1)] += std::min(c, it->second);
        }
      }
    }
  }
  // Geometric mean over orders that have any candidate n-grams; zero match
  // counts are floored at 1e-9.
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < max_n; ++n) {
    if (total[static_cast<size_t>(n)] == 0.0) continue;
    const double m = std::max(matched[static_cast<size_t>(n)], 1e-9);
    log_sum += std::log(m / total[static_cast<size_t>(n)]);
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double geo = std::exp(log_sum / orders);
  const double bp =
      cand_len >= ref_len || cand_len == 0.0
          ? (cand_len == 0.0 ? 0.0 : 1.0)
          : std::exp(1.0 - ref_len / cand_len);
  return 100.0 * bp * geo;
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  char buf[64];
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    os << key << ": " << buf << "\n";
  };
  line("rouge1", rouge1);
  line("rouge2", rouge2);
  line("rougeL", rouge_l);
  line("token_kept_f1", token_kept_f1);
  line("bleu", bleu);
  for (const auto& [n, v] : rep) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    os << "rep" << n << ": " << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.1f", mean_latency_ns);
  os << "mean_latency_ns: " << buf << "\n";
  if (speedup_vs_baseline) {
    std::snprintf(buf, sizeof(buf), "%.4f", *speedup_vs_baseline);
    os << "speedup_vs_baseline: " << buf << "\n";
  }
  return os.str();
}

std::string MetricReport::tsv_header() {
  return "rouge1\trouge2\trougeL\ttoken_kept_f1\tbleu\trep1\trep2\trep3\t"
         "rep4\tmean_latency_ns\tspeedup";
}

std::string MetricReport::to_tsv_row() const {
  std::ostringstream os;
  char buf[64];
  auto cell = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    os << buf;
  };
  cell(rouge1);
  os << '\t';
  cell(rouge2);
  os << '\t';
  cell(rouge_l);
  os << '\t';
  cell(token_kept_f1);
  os << '\t';
  cell(bleu);
  for (int n = 1; n <= 4; ++n) {
    os << '\t';
    auto it = rep.find(n);
    cell(it == rep.end() ? 0.0 : it->second);
  }
  os << '\t';
  std::snprintf(buf, sizeof(buf), "%.1f", mean_latency_ns);
  os << buf << '\t';
  if (speedup_vs_baseline) {
    std::snprintf(buf, sizeof(buf), "%.4f", *speedup_vs_baseline);
    os << buf;
  } else {
    os << "-";
  }
  return os.str();
}

MetricReport evaluate_outputs(const std::vector<Tokens>& outputs,
                              const std::vector<Tokens>& references,
                              const std::vector<Tokens>& sources) {
  if (outputs.size() != references.size() ||
      outputs.size() != sources.size()) {
    throw ContractError("evaluate_outputs: size mismatch, " +
                        std::to_string(outputs.size()) + " outputs vs " +
                        std::to_string(references.size()) + " references vs " +
                        std::to_string(sources.size()) + " sources");
  }
  MetricReport report;
  if (outputs.empty()) return report;
  const double n = static_cast<double>(outputs.size());
  for (int k = 1; k <= 4; ++k) report.rep[k] = 0.0;
  for (size_t e = 0; e < outputs.size(); ++e) {
    report.rouge1 += rouge_n(outputs[e], references[e], 1);
    report.rouge2 += rouge_n(outputs[e], references[e], 2);
    report.rouge_l += rouge_l(outputs[e], references[e]);
    report.token_kept_f1 +=
        token_kept_f1(outputs[e], references[e], sources[e]);
    for (int k = 1; k <= 4; ++k) report.rep[k] += rep_n(outputs[e], k);
  }
  report.rouge1 /= n;
  report.rouge2 /= n;
  report.rouge_l /= n;
  report.token_kept_f1 /= n;
  for (int k = 1; k <= 4; ++k) report.rep[k] /= n;
  report.bleu = bleu(outputs, references);
  return report;
}

}  // namespace crfgen
