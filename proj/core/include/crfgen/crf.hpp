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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crfgen/tensor.hpp"

namespace crfgen {

// Linear-chain CRF over the vocabulary with the transition matrix factored
// as E1 * E2^T. Transition scores are always computed as rank-d dot products;
// the dense |V| x |V| matrix only ever exists inside the exact oracles.
struct CrfParams {
  Tensor phi_weight;  // [d_model x |V|]
  Tensor phi_bias;    // [|V|]
  Tensor e1;          // [|V| x d]
  Tensor e2;          // [|V| x d]
  int rank_d = 32;
  int beam_k = 256;

  static CrfParams init(size_t d_model, size_t vocab_size, int rank_d,
                        int beam_k, Rng& rng);

  size_t vocab_size() const { return phi_bias.dim(0); }
  std::vector<std::pair<std::string, Tensor>> parameters();
};

// t(u, v) = dot(E1[u], E2[v]).
double transition_score(const CrfParams& params, int u, int v);

// Label scores Phi(h_i) = h_i * phi_weight + phi_bias, shape [T x |V|].
Tensor label_scores(const Tensor& h, const CrfParams& params);

// Beam-truncated candidate sets. Each position holds exactly `width` label
// ids sorted by descending label score (ties toward the lower id).
struct Lattice {
  int length = 0;
  int width = 0;
  std::vector<int32_t> ids;      // [length x width]
  std::vector<double> scores;    // [length x width], label scores

  std::span<const int32_t> candidates(int i) const {
    return {ids.data() + static_cast<size_t>(i) * width,
            static_cast<size_t>(width)};
  }
  std::span<const double> candidate_scores(int i) const {
    return {scores.data() + static_cast<size_t>(i) * width,
            static_cast<size_t>(width)};
  }
};

// Per position, the top-k labels by score with [eos] force-inserted in place
// of the k-th entry when absent. k is clamped to |V|; k < 2 is an error.
Lattice build_lattice(std::span<const double> emissions, size_t length,
                      size_t vocab_size, int k);

// Variant with [eos] excluded from every candidate set (fixed-length
// decoding of the no-EOS model). k is clamped to |V| - 1.
Lattice build_lattice_without_eos(std::span<const double> emissions,
                                  size_t length, size_t vocab_size, int k);

// Exact path score over full emissions [length x |V|]:
// S = Phi_{y1}(h1) + sum_{i>=2} (Phi_{yi}(hi) + t(y_{i-1}, y_i)).
double path_score(std::span<const double> emissions, size_t vocab_size,
                  std::span<const int> labels, const CrfParams& params);

// Reusable buffers for the decode-path dynamic programs.
struct CrfWorkspace {
  std::vector<double> e1rows, e2rows, block, acc, acc_next, alphas, betas;
  std::vector<int32_t> choice;
};

// Forward algorithm in log space restricted to the lattice candidates.
double log_partition(const Lattice& lattice, const CrfParams& params);
double log_partition(const Lattice& lattice, const CrfParams& params,
                     CrfWorkspace& ws);

struct ViterbiResult {
  std::vector<int> labels;
  double score = 0.0;
};

// Max-sum decoding over the lattice. Ties resolve toward the lower label id,
// yielding the lexicographically smallest optimal trajectory; the returned
// score equals path_score of the returned labels.
ViterbiResult viterbi(const Lattice& lattice, const CrfParams& params);
ViterbiResult viterbi(const Lattice& lattice, const CrfParams& params,
                      CrfWorkspace& ws);

// Differentiable log partition over the supervised emissions. Gradients flow
// into `emissions`, E1 and E2 via the forward-backward recursions.
Tensor log_partition_op(const Tensor& emissions, const CrfParams& params,
                        const Lattice& lattice);

// Differentiable target path score.
Tensor path_score_op(const Tensor& emissions, const CrfParams& params,
                     std::span<const int> labels);

// CRF negative log likelihood: log Z (beam k) minus the target path score,
// both over the first `targets.size()` rows of H.
Tensor crf_nll(const Tensor& h, std::span<const int> targets,
               const CrfParams& params, int k);

// Brute-force oracles for tiny instances (|V|^L <= 10^7); they materialize
// the dense transition matrix and enumerate every label sequence. Larger
// instances are refused.
double exact_oracle_partition(std::span<const double> emissions, size_t length,
                              size_t vocab_size, const CrfParams& params);
ViterbiResult exact_oracle_viterbi(std::span<const double> emissions,
                                   size_t length, size_t vocab_size,
                                   const CrfParams& params);

}  // namespace crfgen
