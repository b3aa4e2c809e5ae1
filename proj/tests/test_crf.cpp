#include <doctest.h>

#include <cmath>

#include "crfgen/crf.hpp"
#include "test_helpers.hpp"

using namespace crfgen;
using crfgen::testing::max_grad_rel_err;
using crfgen::testing::rel_err;

namespace {

CrfParams random_params(size_t d_model, size_t vocab, int rank, int beam,
                        uint64_t seed) {
  Rng rng(seed);
  return CrfParams::init(d_model, vocab, rank, beam, rng);
}

CrfParams zero_params(size_t d_model, size_t vocab, int rank, int beam) {
  CrfParams p = random_params(d_model, vocab, rank, beam, 0);
  for (auto& [name, t] : p.parameters()) {
    for (size_t i = 0; i < t.size(); ++i) t.data()[i] = 0.0;
  }
  return p;
}

std::vector<double> random_emissions(size_t length, size_t vocab,
                                     uint64_t seed) {
  Rng rng(seed);
  std::vector<double> em(length * vocab);
  for (double& v : em) v = rng.uniform(-1.0, 1.0);
  return em;
}

}  // namespace

TEST_CASE("label_scores is the affine map of the hidden states") {
  CrfParams params = zero_params(2, 3, 1, 2);
  Tensor h = Tensor::zeros({4, 2});
  Tensor scores = label_scores(h, params);
  CHECK(scores.shape() == std::vector<size_t>{4, 3});
  for (size_t i = 0; i < scores.size(); ++i) CHECK(scores.data()[i] == 0.0);

  // d_model = 2, |V| = 3 hand case
  params.phi_weight = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  params.phi_bias = Tensor::from_data({3}, {0.5, -0.5, 0.0});
  h = Tensor::from_data({1, 2}, {2.0, -1.0});
  scores = label_scores(h, params);
  CHECK(scores.at(0, 0) == doctest::Approx(2 * 1 - 1 * 4 + 0.5));
  CHECK(scores.at(0, 1) == doctest::Approx(2 * 2 - 1 * 5 - 0.5));
  CHECK(scores.at(0, 2) == doctest::Approx(2 * 3 - 1 * 6 + 0.0));
}

TEST_CASE("path_score of a single position is the label score") {
  CrfParams params = random_params(3, 5, 2, 5, 1);
  std::vector<double> em = random_emissions(1, 5, 2);
  std::vector<int> labels = {3};
  CHECK(path_score(em, 5, labels, params) == em[3]);
}

TEST_CASE("path_score with zero parameters and zero emissions is zero") {
  CrfParams params = zero_params(3, 5, 2, 5);
  std::vector<double> em(3 * 5, 0.0);
  std::vector<int> labels = {1, 4, 2};
  CHECK(path_score(em, 5, labels, params) == 0.0);
}

TEST_CASE("path_score matches a dense transition-matrix evaluation") {
  const size_t vocab = 4, len = 3;
  CrfParams params = random_params(2, vocab, 2, 4, 3);
  std::vector<double> em = random_emissions(len, vocab, 4);
  // dense T = E1 * E2^T, materialized only here
  double dense[4][4];
  for (int u = 0; u < 4; ++u) {
    for (int v = 0; v < 4; ++v) {
      dense[u][v] = 0.0;
      for (int l = 0; l < 2; ++l) {
        dense[u][v] += params.e1.at(static_cast<size_t>(u), static_cast<size_t>(l)) *
                       params.e2.at(static_cast<size_t>(v), static_cast<size_t>(l));
      }
    }
  }
  std::vector<int> labels = {2, 0, 3};
  const double expect = em[2] + em[vocab + 0] + dense[2][0] +
                        em[2 * vocab + 3] + dense[0][3];
  CHECK(path_score(em, vocab, labels, params) == doctest::Approx(expect));
}

TEST_CASE("build_lattice with k = |V| keeps the full vocabulary") {
  const size_t vocab = 6, len = 3;
  std::vector<double> em = random_emissions(len, vocab, 5);
  Lattice lat = build_lattice(em, len, vocab, static_cast<int>(vocab));
  CHECK(lat.width == 6);
  for (int i = 0; i < lat.length; ++i) {
    auto ids = lat.candidates(i);
    std::vector<bool> seen(vocab, false);
    for (int32_t id : ids) seen[static_cast<size_t>(id)] = true;
    for (size_t v = 0; v < vocab; ++v) CHECK(seen[v]);
    auto scores = lat.candidate_scores(i);
    for (size_t j = 1; j < scores.size(); ++j) CHECK(scores[j - 1] >= scores[j]);
  }
}

TEST_CASE("[eos] is force-inserted when it misses the beam") {
  const size_t vocab = 6;
  std::vector<double> em = {5, 4, 3, -9, 2, 1};  // eos (id 3) ranks last
  Lattice lat = build_lattice(em, 1, vocab, 3);
  auto ids = lat.candidates(0);
  CHECK(ids.size() == 3);
  CHECK(ids[0] == 0);
  CHECK(ids[1] == 1);
  CHECK(ids[2] == kEosId);  // replaced the k-th entry
}

TEST_CASE("build_lattice top-k selection on hand scores") {
  const size_t vocab = 5;
  std::vector<double> em = {0.1, 0.9, 0.2, 0.8, 0.3,
                            0.5, 0.4, 0.3, 0.9, 0.2};
  Lattice lat = build_lattice(em, 2, vocab, 2);
  CHECK(lat.candidates(0)[0] == 1);
  CHECK(lat.candidates(0)[1] == 3);  // 0.8 happens to be the eos id as well
  CHECK(lat.candidates(1)[0] == 3);
  CHECK(lat.candidates(1)[1] == 0);
}

TEST_CASE("beam size is clamped to the vocabulary and k < 2 rejected") {
  const size_t vocab = 5;
  std::vector<double> em = random_emissions(2, vocab, 6);
  Lattice lat = build_lattice(em, 2, vocab, 100);
  CHECK(lat.width == 5);
  CHECK_THROWS_AS(build_lattice(em, 2, vocab, 1), ContractError);
}

TEST_CASE("log_partition of a single position is the logsumexp of scores") {
  const size_t vocab = 5;
  CrfParams params = random_params(2, vocab, 2, 5, 7);
  std::vector<double> em = random_emissions(1, vocab, 8);
  Lattice lat = build_lattice(em, 1, vocab, 5);
  double mx = *std::max_element(em.begin(), em.end());
  double s = 0;
  for (double v : em) s += std::exp(v - mx);
  CHECK(log_partition(lat, params) == doctest::Approx(mx + std::log(s)));
}

TEST_CASE("uniform model partition is L * log|V|") {
  const size_t vocab = 6, len = 4;
  CrfParams params = zero_params(3, vocab, 2, 6);
  std::vector<double> em(len * vocab, 0.0);
  Lattice lat = build_lattice(em, len, vocab, 6);
  CHECK(log_partition(lat, params) ==
        doctest::Approx(4.0 * std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("log_partition matches exhaustive enumeration on tiny instances") {
  for (uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed * 7 + 1);
    const size_t vocab = static_cast<size_t>(rng.uniform_int(4, 6));
    const size_t len = static_cast<size_t>(rng.uniform_int(1, 5));
    CrfParams params = random_params(2, vocab, 2, static_cast<int>(vocab),
                                     seed + 100);
    std::vector<double> em = random_emissions(len, vocab, seed + 200);
    Lattice lat = build_lattice(em, len, vocab, static_cast<int>(vocab));
    const double dp = log_partition(lat, params);
    const double exact = exact_oracle_partition(em, len, vocab, params);
    CHECK(rel_err(dp, exact) < 1e-9);
  }
}

TEST_CASE("viterbi of a single position takes the argmax label") {
  const size_t vocab = 5;
  CrfParams params = random_params(2, vocab, 1, 5, 9);
  std::vector<double> em = {0.3, 0.9, -0.2, 0.1, 0.5};
  Lattice lat = build_lattice(em, 1, vocab, 5);
  ViterbiResult r = viterbi(lat, params);
  CHECK(r.labels == std::vector<int>{1});
  CHECK(r.score == 0.9);
}

TEST_CASE("viterbi matches brute-force argmax with the low-id tie-break") {
  for (uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed * 13 + 3);
    const size_t vocab = static_cast<size_t>(rng.uniform_int(4, 6));
    const size_t len = static_cast<size_t>(rng.uniform_int(1, 5));
    CrfParams params = random_params(2, vocab, 2, static_cast<int>(vocab),
                                     seed + 300);
    std::vector<double> em = random_emissions(len, vocab, seed + 400);
    Lattice lat = build_lattice(em, len, vocab, static_cast<int>(vocab));
    ViterbiResult got = viterbi(lat, params);
    ViterbiResult expect = exact_oracle_viterbi(em, len, vocab, params);
    CHECK(got.labels == expect.labels);
    CHECK(rel_err(got.score, expect.score) < 1e-12);
  }
}

TEST_CASE("viterbi ties resolve toward the lexicographically smallest path") {
  const size_t vocab = 4, len = 3;
  CrfParams params = zero_params(2, vocab, 2, 4);
  std::vector<double> em(len * vocab, 0.0);  // every path scores zero
  Lattice lat = build_lattice(em, len, vocab, 4);
  ViterbiResult r = viterbi(lat, params);
  CHECK(r.labels == std::vector<int>{0, 0, 0});
  ViterbiResult oracle = exact_oracle_viterbi(em, len, vocab, params);
  CHECK(oracle.labels == r.labels);
}

TEST_CASE("absorbing transition keeps the path at the absorbing label") {
  const size_t vocab = 4, len = 5;
  CrfParams params = zero_params(2, vocab, 1, 4);
  // t(eos, eos) large and positive, t(eos, v) strongly negative for v != eos.
  params.e1.set(kEosId, 0, 4.0);
  for (size_t v = 0; v < vocab; ++v) {
    params.e2.set(v, 0, v == kEosId ? 2.0 : -2.0);
  }
  std::vector<double> em(len * vocab, 0.0);
  em[0 * vocab + kEosId] = 1.0;  // enter eos immediately
  ViterbiResult oracle = exact_oracle_viterbi(em, len, vocab, params);
  bool entered = false;
  for (int y : oracle.labels) {
    if (entered) CHECK(y == kEosId);
    if (y == kEosId) entered = true;
  }
  CHECK(entered);
  Lattice lat = build_lattice(em, len, vocab, 4);
  CHECK(viterbi(lat, params).labels == oracle.labels);
}

TEST_CASE("viterbi score equals path_score of the returned labels exactly") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const size_t vocab = 6, len = 5;
    CrfParams params = random_params(2, vocab, 3, 4, seed + 500);
    std::vector<double> em = random_emissions(len, vocab, seed + 600);
    Lattice lat = build_lattice(em, len, vocab, 4);
    ViterbiResult r = viterbi(lat, params);
    CHECK(r.score == path_score(em, vocab, r.labels, params));
  }
}

TEST_CASE("path probability of the viterbi path never exceeds one") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const size_t vocab = 5, len = 4;
    CrfParams params = random_params(2, vocab, 2, static_cast<int>(vocab),
                                     seed + 700);
    std::vector<double> em = random_emissions(len, vocab, seed + 800);
    Lattice lat = build_lattice(em, len, vocab, static_cast<int>(vocab));
    ViterbiResult r = viterbi(lat, params);
    const double log_z = exact_oracle_partition(em, len, vocab, params);
    CHECK(r.score - log_z <= 1e-12);
  }
}

TEST_CASE("truncated partition is non-decreasing in the beam size") {
  const size_t vocab = 8, len = 5;
  CrfParams params = random_params(2, vocab, 3, 8, 11);
  std::vector<double> em = random_emissions(len, vocab, 12);
  double prev = -1e300;
  for (int k = 2; k <= 8; ++k) {
    Lattice lat = build_lattice(em, len, vocab, k);
    const double z = log_partition(lat, params);
    CHECK(z >= prev - 1e-12);
    prev = z;
  }
}

TEST_CASE("exact oracle on two zero-scored positions gives 2 log 2") {
  // |V| = 2 keeps [eos] out of range, which the oracle itself never needs.
  CrfParams params = zero_params(2, 2, 1, 2);
  std::vector<double> em(2 * 2, 0.0);
  CHECK(exact_oracle_partition(em, 2, 2, params) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("oracles refuse oversized instances") {
  CrfParams params = zero_params(2, 12, 1, 2);
  std::vector<double> em(12 * 12, 0.0);
  CHECK_THROWS_AS(exact_oracle_partition(em, 12, 12, params), ContractError);
  CHECK_THROWS_AS(exact_oracle_viterbi(em, 12, 12, params), ContractError);
}

TEST_CASE("uniform crf_nll is L * log|V| under full candidates") {
  const size_t vocab = 6;
  CrfParams params = zero_params(4, vocab, 2, static_cast<int>(vocab));
  Tensor h = Tensor::zeros({5, 4});
  std::vector<int> targets = {5, 2, kEosId, kEosId};
  Tensor loss = crf_nll(h, targets, params, static_cast<int>(vocab));
  CHECK(loss.item() == doctest::Approx(4.0 * std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("crf_nll is non-negative when the normalizer is exact") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const size_t vocab = 6;
    Rng rng(seed + 900);
    CrfParams params = CrfParams::init(3, vocab, 2, 6, rng);
    Tensor h = Tensor::uniform({4, 3}, -1, 1, rng);
    std::vector<int> targets = {static_cast<int>(seed % vocab), 1, kEosId};
    Tensor loss = crf_nll(h, targets, params, static_cast<int>(vocab));
    CHECK(loss.item() >= -1e-12);
  }
}

TEST_CASE("truncation never overestimates the loss of covered targets") {
  // When every target label sits inside the candidate sets, the truncated
  // normalizer underestimates Z, so nll(k=|V|) - nll(k<|V|) >= 0.
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const size_t vocab = 8;
    Rng rng(seed + 950);
    CrfParams params = CrfParams::init(3, vocab, 2, 8, rng);
    Tensor h = Tensor::uniform({3, 3}, -1, 1, rng);
    // Pick targets from the truncated lattice itself so they are covered.
    Tensor em = label_scores(h, params);
    Lattice lat = build_lattice({em.data(), em.size()}, 3, vocab, 3);
    std::vector<int> targets;
    for (int i = 0; i < 3; ++i) targets.push_back(lat.candidates(i)[1]);
    const double full =
        crf_nll(h, targets, params, static_cast<int>(vocab)).item();
    const double truncated = crf_nll(h, targets, params, 3).item();
    CHECK(full - truncated >= -1e-12);
  }
}

TEST_CASE("log_partition_op forward value equals the plain DP") {
  const size_t vocab = 6, len = 4;
  CrfParams params = random_params(3, vocab, 2, 4, 13);
  Rng rng(14);
  Tensor em = Tensor::uniform({len, vocab}, -1, 1, rng);
  Lattice lat = build_lattice({em.data(), em.size()}, len, vocab, 4);
  CHECK(log_partition_op(em, params, lat).item() ==
        log_partition(lat, params));
}

TEST_CASE("crf gradients match finite differences on a tiny instance") {
  const size_t vocab = 6, d_model = 3, len = 4;
  Rng rng(15);
  CrfParams params = CrfParams::init(d_model, vocab, 2, static_cast<int>(vocab),
                                     rng);
  Tensor h = Tensor::uniform({len, d_model}, -1, 1, rng);
  std::vector<int> targets = {4, 5, kEosId, kEosId};
  auto loss = [&]() {
    return crf_nll(h, targets, params, static_cast<int>(vocab));
  };
  CHECK(max_grad_rel_err(h, loss) < 1e-4);
  CHECK(max_grad_rel_err(params.phi_weight, loss) < 1e-4);
  CHECK(max_grad_rel_err(params.phi_bias, loss) < 1e-4);
  CHECK(max_grad_rel_err(params.e1, loss) < 1e-4);
  CHECK(max_grad_rel_err(params.e2, loss) < 1e-4);
}

TEST_CASE("crf_nll validates its labels") {
  CrfParams params = zero_params(2, 5, 1, 5);
  Tensor h = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(crf_nll(h, std::vector<int>{1, 7}, params, 5), VocabError);
  CHECK_THROWS_AS(crf_nll(h, std::vector<int>{}, params, 5), ContractError);
  CHECK_THROWS_AS(crf_nll(h, std::vector<int>{1, 1, 1, 1}, params, 5),
                  ContractError);
}
