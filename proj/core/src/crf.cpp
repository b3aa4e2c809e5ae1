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

#include "crfgen/crf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace crfgen {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_labels(std::span<const int> labels, size_t vocab_size,
                  const char* op) {
  if (labels.empty()) {
    throw ContractError(std::string(op) + ": empty label sequence");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<size_t>(y) >= vocab_size) {
      throw VocabError(std::string(op) + ": label " + std::to_string(y) +
                       " outside vocabulary of " + std::to_string(vocab_size));
    }
  }
}

// rows[i] = table[ids[i]], table row width d.
void gather_rows(const double* table, std::span<const int32_t> ids, size_t d,
                 std::vector<double>& out) {
  out.resize(ids.size() * d);
  for (size_t i = 0; i < ids.size(); ++i) {
    std::memcpy(out.data() + i * d,
                table + static_cast<size_t>(ids[i]) * d, d * sizeof(double));
  }
}

// block[i][j] = dot(a_i, b_j); a: [m x d], b: [n x d]. The decode hot loop:
// O(m * n * d) per lattice step.
void dot_block(const double* __restrict__ a, const double* __restrict__ b,
               double* __restrict__ block, size_t m, size_t n, size_t d) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * d;
    double* brow_out = block + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = b + j * d;
      double acc = 0.0;
      for (size_t l = 0; l < d; ++l) acc += arow[l] * brow[l];
      brow_out[j] = acc;
    }
  }
}

double logsumexp_span(const double* x, size_t n) {
  double mx = x[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
  return mx + std::log(s);
}

Lattice build_lattice_impl(std::span<const double> emissions, size_t length,
                           size_t vocab_size, int k, bool include_eos) {
  if (k < 2) {
    throw ContractError("build_lattice: beam size " + std::to_string(k) +
                        " must be >= 2");
  }
  if (length == 0) throw ContractError("build_lattice: empty lattice");
  if (emissions.size() != length * vocab_size) {
    throw ShapeError("build_lattice: emission buffer of " +
                     std::to_string(emissions.size()) + " values vs " +
                     std::to_string(length) + " x " +
                     std::to_string(vocab_size));
  }
  const size_t limit = include_eos ? vocab_size : vocab_size - 1;
  const size_t width = std::min(static_cast<size_t>(k), limit);

  Lattice lat;
  lat.length = static_cast<int>(length);
  lat.width = static_cast<int>(width);
  lat.ids.resize(length * width);
  lat.scores.resize(length * width);

  std::vector<int32_t> order(vocab_size);
  for (size_t i = 0; i < length; ++i) {
    const double* em = emissions.data() + i * vocab_size;
    order.clear();
    for (size_t v = 0; v < vocab_size; ++v) {
      if (!include_eos && static_cast<int>(v) == kEosId) continue;
      order.push_back(static_cast<int32_t>(v));
    }
    auto better = [em](int32_t a, int32_t b) {
      if (em[a] != em[b]) return em[a] > em[b];
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + width, order.end(),
                      better);
    int32_t* ids = lat.ids.data() + i * width;
    double* scores = lat.scores.data() + i * width;
    bool has_eos = false;
    for (size_t j = 0; j < width; ++j) {
      ids[j] = order[j];
      scores[j] = em[order[j]];
      has_eos = has_eos || order[j] == kEosId;
    }
    if (include_eos && !has_eos) {
      ids[width - 1] = kEosId;
      scores[width - 1] = em[kEosId];
    }
  }
  return lat;
}

// Shared state for the differentiable log partition: everything the backward
// pass reuses from the forward run.
struct PartitionTrace {
  Lattice lattice;
  std::vector<double> alphas;  // [length x width]
  double log_z = 0.0;
};

// Forward algorithm over the lattice; fills per-position alphas when asked.
double forward_algorithm(const Lattice& lat, const CrfParams& params,
                         CrfWorkspace& ws, std::vector<double>* alphas_out) {
  const size_t width = static_cast<size_t>(lat.width);
  const size_t length = static_cast<size_t>(lat.length);
  const size_t d = static_cast<size_t>(params.rank_d);
  const double* e1 = params.e1.data();
  const double* e2 = params.e2.data();

  ws.acc.resize(width);
  ws.acc_next.resize(width);
  if (alphas_out) alphas_out->resize(length * width);

  std::span<const double> phi0 = lat.candidate_scores(0);
  std::copy(phi0.begin(), phi0.end(), ws.acc.begin());
  if (alphas_out) {
    std::copy(ws.acc.begin(), ws.acc.end(), alphas_out->begin());
  }

  std::vector<double> terms(width);
  for (size_t i = 1; i < length; ++i) {
    gather_rows(e1, lat.candidates(static_cast<int>(i - 1)), d, ws.e1rows);
    gather_rows(e2, lat.candidates(static_cast<int>(i)), d, ws.e2rows);
    // blockT[w][v] = t(cand_{i-1}[v], cand_i[w])
    ws.block.resize(width * width);
    dot_block(ws.e2rows.data(), ws.e1rows.data(), ws.block.data(), width,
              width, d);
    std::span<const double> phi = lat.candidate_scores(static_cast<int>(i));
    for (size_t w = 0; w < width; ++w) {
      const double* trow = ws.block.data() + w * width;
      for (size_t v = 0; v < width; ++v) terms[v] = ws.acc[v] + trow[v];
      ws.acc_next[w] = phi[w] + logsumexp_span(terms.data(), width);
    }
    std::swap(ws.acc, ws.acc_next);
    if (alphas_out) {
      std::copy(ws.acc.begin(), ws.acc.end(),
                alphas_out->begin() + i * width);
    }
  }
  return logsumexp_span(ws.acc.data(), width);
}

}  // namespace

CrfParams CrfParams::init(size_t d_model, size_t vocab_size, int rank_d,
                          int beam_k, Rng& rng) {
  if (rank_d < 1) throw ConfigError("crf: rank d must be >= 1");
  if (beam_k < 2) throw ConfigError("crf: beam k must be >= 2");
  CrfParams p;
  p.rank_d = rank_d;
  p.beam_k = beam_k;
  p.phi_weight = Tensor::uniform({d_model, vocab_size}, -0.1, 0.1, rng);
  p.phi_weight.set_requires_grad(true);
  p.phi_bias = Tensor::zeros({vocab_size});
  p.phi_bias.set_requires_grad(true);
  p.e1 = Tensor::uniform({vocab_size, static_cast<size_t>(rank_d)}, -0.1, 0.1,
                         rng);
  p.e1.set_requires_grad(true);
  p.e2 = Tensor::uniform({vocab_size, static_cast<size_t>(rank_d)}, -0.1, 0.1,
                         rng);
  p.e2.set_requires_grad(true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> CrfParams::parameters() {
  return {{"crf.phi_weight", phi_weight},
          {"crf.phi_bias", phi_bias},
          {"crf.e1", e1},
          {"crf.e2", e2}};
}

double transition_score(const CrfParams& params, int u, int v) {
  const size_t d = static_cast<size_t>(params.rank_d);
  const double* a = params.e1.data() + static_cast<size_t>(u) * d;
  const double* b = params.e2.data() + static_cast<size_t>(v) * d;
  double acc = 0.0;
  for (size_t l = 0; l < d; ++l) acc += a[l] * b[l];
  return acc;
}

Tensor label_scores(const Tensor& h, const CrfParams& params) {
  return ops::add_row_broadcast(ops::matmul(h, params.phi_weight),
                                params.phi_bias);
}

Lattice build_lattice(std::span<const double> emissions, size_t length,
                      size_t vocab_size, int k) {
  return build_lattice_impl(emissions, length, vocab_size, k, true);
}

Lattice build_lattice_without_eos(std::span<const double> emissions,
                                  size_t length, size_t vocab_size, int k) {
  return build_lattice_impl(emissions, length, vocab_size, k, false);
}

double path_score(std::span<const double> emissions, size_t vocab_size,
                  std::span<const int> labels, const CrfParams& params) {
  check_labels(labels, vocab_size, "path_score");
  if (emissions.size() < labels.size() * vocab_size) {
    throw ShapeError("path_score: " + std::to_string(emissions.size()) +
                     " emission values cannot cover " +
                     std::to_string(labels.size()) + " positions over " +
                     std::to_string(vocab_size) + " labels");
  }
  double acc = emissions[static_cast<size_t>(labels[0])];
  for (size_t i = 1; i < labels.size(); ++i) {
    acc += emissions[i * vocab_size + static_cast<size_t>(labels[i])] +
           transition_score(params, labels[i - 1], labels[i]);
  }
  return acc;
}

double log_partition(const Lattice& lattice, const CrfParams& params) {
  CrfWorkspace ws;
  return log_partition(lattice, params, ws);
}

double log_partition(const Lattice& lattice, const CrfParams& params,
                     CrfWorkspace& ws) {
  if (lattice.length < 1) throw ContractError("log_partition: empty lattice");
  return forward_algorithm(lattice, params, ws, nullptr);
}

ViterbiResult viterbi(const Lattice& lattice, const CrfParams& params) {
  CrfWorkspace ws;
  return viterbi(lattice, params, ws);
}

ViterbiResult viterbi(const Lattice& lattice, const CrfParams& params,
                      CrfWorkspace& ws) {
  if (lattice.length < 1) throw ContractError("viterbi: empty lattice");
  const size_t width = static_cast<size_t>(lattice.width);
  const size_t length = static_cast<size_t>(lattice.length);
  const size_t d = static_cast<size_t>(params.rank_d);
  const double* e1 = params.e1.data();
  const double* e2 = params.e2.data();

  // Suffix scores: acc[v] = best score of a path starting at position i with
  // candidate v. Running the max-sum recursion from the back and rebuilding
  // the path from the front makes the low-label-id tie-break produce the
  // lexicographically smallest optimal trajectory, which is what the
  // enumeration oracle produces as well.
  ws.acc.assign(width, 0.0);
  ws.acc_next.assign(width, 0.0);
  ws.choice.assign(length * width, -1);

  std::span<const double> phi_last =
      lattice.candidate_scores(lattice.length - 1);
  std::copy(phi_last.begin(), phi_last.end(), ws.acc.begin());

  for (size_t i = length - 1; i-- > 0;) {
    gather_rows(e1, lattice.candidates(static_cast<int>(i)), d, ws.e1rows);
    gather_rows(e2, lattice.candidates(static_cast<int>(i + 1)), d,
                ws.e2rows);
    // block[v][w] = t(cand_i[v], cand_{i+1}[w])
    ws.block.resize(width * width);
    dot_block(ws.e1rows.data(), ws.e2rows.data(), ws.block.data(), width,
              width, d);
    std::span<const double> phi = lattice.candidate_scores(static_cast<int>(i));
    std::span<const int32_t> next_ids =
        lattice.candidates(static_cast<int>(i + 1));
    int32_t* choice = ws.choice.data() + i * width;
    for (size_t v = 0; v < width; ++v) {
      const double* trow = ws.block.data() + v * width;
      double best = kNegInf;
      int32_t best_w = -1;
      for (size_t w = 0; w < width; ++w) {
        const double s = trow[w] + ws.acc[w];
        if (s > best || (s == best && best_w >= 0 &&
                         next_ids[w] < next_ids[best_w])) {
          best = s;
          best_w = static_cast<int32_t>(w);
        }
      }
      ws.acc_next[v] = phi[v] + best;
      choice[v] = best_w;
    }
    std::swap(ws.acc, ws.acc_next);
  }

  std::span<const int32_t> first_ids = lattice.candidates(0);
  size_t start = 0;
  for (size_t v = 1; v < width; ++v) {
    if (ws.acc[v] > ws.acc[start] ||
        (ws.acc[v] == ws.acc[start] && first_ids[v] < first_ids[start])) {
      start = v;
    }
  }

  ViterbiResult result;
  result.labels.resize(length);
  size_t idx = start;
  for (size_t i = 0; i < length; ++i) {
    result.labels[i] = lattice.candidates(static_cast<int>(i))[idx];
    if (i + 1 < length) idx = ws.choice[i * width + idx];
  }

  // Same arithmetic as path_score: label score of the first position, then
  // label score plus transition for each following state.
  double acc =
      lattice.candidate_scores(0)[start];
  idx = start;
  for (size_t i = 1; i < length; ++i) {
    const size_t next = ws.choice[(i - 1) * width + idx];
    acc += lattice.candidate_scores(static_cast<int>(i))[next] +
           transition_score(params, result.labels[i - 1], result.labels[i]);
    idx = next;
  }
  result.score = acc;
  return result;
}

Tensor log_partition_op(const Tensor& emissions, const CrfParams& params,
                        const Lattice& lattice) {
  const size_t vocab = params.vocab_size();
  if (emissions.rank() != 2 || emissions.dim(1) != vocab ||
      emissions.dim(0) != static_cast<size_t>(lattice.length)) {
    throw ShapeError("log_partition_op: emissions " +
                     shape_to_string(emissions.shape()) +
                     " do not match lattice of length " +
                     std::to_string(lattice.length) + " over " +
                     std::to_string(vocab) + " labels");
  }
  auto trace = std::make_shared<PartitionTrace>();
  trace->lattice = lattice;
  CrfWorkspace ws;
  trace->log_z = forward_algorithm(lattice, params, ws, &trace->alphas);
  Tensor out = Tensor::scalar(trace->log_z);

  GradientTape* tape = GradientTape::active();
  if (tape && tape->should_record({&emissions, &params.e1, &params.e2})) {
    auto s_em = emissions.shared_state();
    auto s_e1 = params.e1.shared_state();
    auto s_e2 = params.e2.shared_state();
    const size_t d = static_cast<size_t>(params.rank_d);
    tape->record(
        out, {emissions, params.e1, params.e2},
        [tape, s_em, s_e1, s_e2, trace, vocab, d](const double* g) {
          const Lattice& lat = trace->lattice;
          const size_t width = static_cast<size_t>(lat.width);
          const size_t length = static_cast<size_t>(lat.length);
          const double gout = g[0];
          double* d_em = tape->grad_buffer(s_em.get());
          double* d_e1 = tape->grad_buffer(s_e1.get());
          double* d_e2 = tape->grad_buffer(s_e2.get());
          const double* e1 = s_e1->data.data();
          const double* e2 = s_e2->data.data();

          // Betas, then unary and pairwise marginals.
          std::vector<double> beta(length * width, 0.0);
          std::vector<double> block(width * width);
          std::vector<double> e1rows, e2rows;
          std::vector<double> terms(width);
          for (size_t i = length; i-- > 1;) {
            gather_rows(e1, lat.candidates(static_cast<int>(i - 1)), d,
                        e1rows);
            gather_rows(e2, lat.candidates(static_cast<int>(i)), d, e2rows);
            // block[v][w] = t(cand_{i-1}[v], cand_i[w])
            dot_block(e1rows.data(), e2rows.data(), block.data(), width,
                      width, d);
            std::span<const double> phi =
                lat.candidate_scores(static_cast<int>(i));
            const double* beta_i = beta.data() + i * width;
            double* beta_prev = beta.data() + (i - 1) * width;
            for (size_t v = 0; v < width; ++v) {
              const double* trow = block.data() + v * width;
              for (size_t w = 0; w < width; ++w) {
                terms[w] = trow[w] + phi[w] + beta_i[w];
              }
              beta_prev[v] = logsumexp_span(terms.data(), width);
            }
          }

          // Unary marginals drive the emission gradient.
          for (size_t i = 0; i < length; ++i) {
            std::span<const int32_t> ids =
                lat.candidates(static_cast<int>(i));
            const double* alpha_i = trace->alphas.data() + i * width;
            const double* beta_i = beta.data() + i * width;
            for (size_t w = 0; w < width; ++w) {
              const double p =
                  std::exp(alpha_i[w] + beta_i[w] - trace->log_z);
              d_em[i * vocab + static_cast<size_t>(ids[w])] += gout * p;
            }
          }

          // Pairwise marginals drive the low-rank factor gradients.
          for (size_t i = 1; i < length; ++i) {
            std::span<const int32_t> prev_ids =
                lat.candidates(static_cast<int>(i - 1));
            std::span<const int32_t> cur_ids =
                lat.candidates(static_cast<int>(i));
            gather_rows(e1, prev_ids, d, e1rows);
            gather_rows(e2, cur_ids, d, e2rows);
            dot_block(e1rows.data(), e2rows.data(), block.data(), width,
                      width, d);
            std::span<const double> phi =
                lat.candidate_scores(static_cast<int>(i));
            const double* alpha_prev = trace->alphas.data() + (i - 1) * width;
            const double* beta_i = beta.data() + i * width;
            for (size_t v = 0; v < width; ++v) {
              const double* trow = block.data() + v * width;
              const double* e1row = e1rows.data() + v * d;
              double* d_e1row =
                  d_e1 + static_cast<size_t>(prev_ids[v]) * d;
              for (size_t w = 0; w < width; ++w) {
                const double p = std::exp(alpha_prev[v] + trow[w] + phi[w] +
                                          beta_i[w] - trace->log_z);
                if (p == 0.0) continue;
                const double gp = gout * p;
                const double* e2row = e2rows.data() + w * d;
                double* d_e2row =
                    d_e2 + static_cast<size_t>(cur_ids[w]) * d;
                for (size_t l = 0; l < d; ++l) {
                  d_e1row[l] += gp * e2row[l];
                  d_e2row[l] += gp * e1row[l];
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor path_score_op(const Tensor& emissions, const CrfParams& params,
                     std::span<const int> labels) {
  const size_t vocab = params.vocab_size();
  check_labels(labels, vocab, "path_score_op");
  if (emissions.rank() != 2 || emissions.dim(1) != vocab ||
      emissions.dim(0) < labels.size()) {
    throw ShapeError("path_score_op: emissions " +
                     shape_to_string(emissions.shape()) + " cannot score " +
                     std::to_string(labels.size()) + " labels over " +
                     std::to_string(vocab));
  }
  const double s = path_score(
      {emissions.data(), labels.size() * vocab}, vocab, labels, params);
  Tensor out = Tensor::scalar(s);

  GradientTape* tape = GradientTape::active();
  if (tape && tape->should_record({&emissions, &params.e1, &params.e2})) {
    auto s_em = emissions.shared_state();
    auto s_e1 = params.e1.shared_state();
    auto s_e2 = params.e2.shared_state();
    std::vector<int> ys(labels.begin(), labels.end());
    const size_t d = static_cast<size_t>(params.rank_d);
    tape->record(out, {emissions, params.e1, params.e2},
                 [tape, s_em, s_e1, s_e2, ys, vocab, d](const double* g) {
      const double gout = g[0];
      double* d_em = tape->grad_buffer(s_em.get());
      double* d_e1 = tape->grad_buffer(s_e1.get());
      double* d_e2 = tape->grad_buffer(s_e2.get());
      const double* e1 = s_e1->data.data();
      const double* e2 = s_e2->data.data();
      for (size_t i = 0; i < ys.size(); ++i) {
        d_em[i * vocab + static_cast<size_t>(ys[i])] += gout;
        if (i == 0) continue;
        const double* e1row = e1 + static_cast<size_t>(ys[i - 1]) * d;
        const double* e2row = e2 + static_cast<size_t>(ys[i]) * d;
        double* d_e1row = d_e1 + static_cast<size_t>(ys[i - 1]) * d;
        double* d_e2row = d_e2 + static_cast<size_t>(ys[i]) * d;
        for (size_t l = 0; l < d; ++l) {
          d_e1row[l] += gout * e2row[l];
          d_e2row[l] += gout * e1row[l];
        }
      }
    });
  }
  return out;
}

Tensor crf_nll(const Tensor& h, std::span<const int> targets,
               const CrfParams& params, int k) {
  const size_t vocab = params.vocab_size();
  check_labels(targets, vocab, "crf_nll");
  Tensor emissions = label_scores(h, params);
  if (targets.size() > emissions.dim(0)) {
    throw ContractError("crf_nll: " + std::to_string(targets.size()) +
                        " supervised positions exceed " +
                        std::to_string(emissions.dim(0)) + " hidden states");
  }
  Tensor supervised = ops::slice_rows(emissions, 0, targets.size());
  Lattice lattice = build_lattice(
      {supervised.data(), supervised.size()}, targets.size(), vocab, k);
  Tensor log_z = log_partition_op(supervised, params, lattice);
  Tensor target_score = path_score_op(supervised, params, targets);
  return ops::sub(log_z, target_score);
}

namespace {

// Enumeration bound: |V|^L paths.
void check_oracle_size(size_t length, size_t vocab_size) {
  double paths = 1.0;
  for (size_t i = 0; i < length; ++i) paths *= static_cast<double>(vocab_size);
  if (paths > 1e7) {
    throw ContractError("oracle: " + std::to_string(vocab_size) + "^" +
                        std::to_string(length) +
                        " label sequences exceed the 10^7 enumeration bound");
  }
}

std::vector<double> dense_transitions(const CrfParams& params) {
  const size_t v = params.vocab_size();
  std::vector<double> t(v * v);
  for (size_t u = 0; u < v; ++u) {
    for (size_t w = 0; w < v; ++w) {
      t[u * v + w] =
          transition_score(params, static_cast<int>(u), static_cast<int>(w));
    }
  }
  return t;
}

// Enumerates label sequences in lexicographic order and hands each one's
// score to the visitor.
template <typename Visit>
void enumerate_paths(std::span<const double> emissions, size_t length,
                     size_t vocab_size, const std::vector<double>& trans,
                     Visit&& visit) {
  std::vector<int> labels(length, 0);
  while (true) {
    double score = emissions[static_cast<size_t>(labels[0])];
    for (size_t i = 1; i < length; ++i) {
      score += emissions[i * vocab_size + static_cast<size_t>(labels[i])] +
               trans[static_cast<size_t>(labels[i - 1]) * vocab_size +
                     static_cast<size_t>(labels[i])];
    }
    visit(labels, score);
    size_t pos = length;
    while (pos-- > 0) {
      if (static_cast<size_t>(++labels[pos]) < vocab_size) break;
      labels[pos] = 0;
      if (pos == 0) return;
    }
  }
}

}  // namespace

double exact_oracle_partition(std::span<const double> emissions, size_t length,
                              size_t vocab_size, const CrfParams& params) {
  if (length == 0) throw ContractError("oracle: empty instance");
  check_oracle_size(length, vocab_size);
  const std::vector<double> trans = dense_transitions(params);
  double mx = kNegInf;
  double acc = 0.0;
  enumerate_paths(emissions, length, vocab_size, trans,
                  [&](const std::vector<int>&, double s) {
                    if (s > mx) {
                      acc = acc * std::exp(mx - s) + 1.0;
                      mx = s;
                    } else {
                      acc += std::exp(s - mx);
                    }
                  });
  return mx + std::log(acc);
}

ViterbiResult exact_oracle_viterbi(std::span<const double> emissions,
                                   size_t length, size_t vocab_size,
                                   const CrfParams& params) {
  if (length == 0) throw ContractError("oracle: empty instance");
  check_oracle_size(length, vocab_size);
  const std::vector<double> trans = dense_transitions(params);
  ViterbiResult best;
  best.score = kNegInf;
  // Strictly-greater keeps the first maximum in lexicographic order, i.e.
  // ties break toward the lower label ids.
  enumerate_paths(emissions, length, vocab_size, trans,
                  [&](const std::vector<int>& labels, double s) {
                    if (s > best.score) {
                      best.score = s;
                      best.labels = labels;
                    }
                  });
  return best;
}

}  // namespace crfgen
