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
//
// Microbenchmarks for the decode hot path: lattice construction, the
// truncated forward algorithm and Viterbi at several beam sizes, plus the
// end-to-end decode strategies.

#include <benchmark/benchmark.h>

#include "crfgen/decode.hpp"
#include "crfgen/encoder.hpp"
#include "crfgen/model.hpp"

namespace {

using namespace crfgen;

struct Fixture {
  CrfParams params;
  std::vector<double> emissions;
  size_t length;
  size_t vocab;

  Fixture(size_t length, size_t vocab, int rank, int beam)
      : params(make_params(vocab, rank, beam)),
        emissions(length * vocab),
        length(length),
        vocab(vocab) {
    Rng rng(99);
    for (double& v : emissions) v = rng.uniform(-1.0, 1.0);
  }

  static CrfParams make_params(size_t vocab, int rank, int beam) {
    Rng rng(7);
    return CrfParams::init(64, vocab, rank, beam, rng);
  }
};

void BM_BuildLattice(benchmark::State& state) {
  Fixture f(64, 1024, 32, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Lattice lat = build_lattice(f.emissions, f.length, f.vocab,
                                static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(lat.ids.data());
  }
}
BENCHMARK(BM_BuildLattice)->Arg(16)->Arg(64)->Arg(256);

void BM_Viterbi(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Fixture f(64, 1024, 32, k);
  Lattice lat = build_lattice(f.emissions, f.length, f.vocab, k);
  CrfWorkspace ws;
  for (auto _ : state) {
    ViterbiResult r = viterbi(lat, f.params, ws);
    benchmark::DoNotOptimize(r.score);
  }
  state.SetItemsProcessed(state.iterations() * f.length);
}
BENCHMARK(BM_Viterbi)->Arg(16)->Arg(64)->Arg(256);

void BM_LogPartition(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Fixture f(64, 1024, 32, k);
  Lattice lat = build_lattice(f.emissions, f.length, f.vocab, k);
  CrfWorkspace ws;
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_partition(lat, f.params, ws));
  }
}
BENCHMARK(BM_LogPartition)->Arg(16)->Arg(64)->Arg(256);

Model bench_model() {
  ModelConfig config;
  config.encoder.n_layers = 2;
  config.encoder.d_model = 64;
  config.encoder.n_heads = 4;
  config.encoder.d_ffn = 128;
  config.encoder.max_len = 64;
  config.rank_d = 32;
  config.beam_k = 64;
  return Model::init(config, 512, 11);
}

void BM_DecodeDynamic(benchmark::State& state) {
  Model model = bench_model();
  std::vector<int> ids(40);
  Rng rng(3);
  ids[0] = kClsId;
  for (size_t i = 1; i + 1 < ids.size(); ++i) ids[i] = rng.uniform_int(5, 511);
  ids.back() = kSepId;
  Tensor h = encode(model.encoder, ids);
  for (auto _ : state) {
    DecodeResult r = decode_dynamic(h, model.crf, model.config.beam_k);
    benchmark::DoNotOptimize(r.score);
  }
}
BENCHMARK(BM_DecodeDynamic);

void BM_DecodeRatioFirst(benchmark::State& state) {
  Model model = bench_model();
  std::vector<int> ids(40);
  Rng rng(3);
  ids[0] = kClsId;
  for (size_t i = 1; i + 1 < ids.size(); ++i) ids[i] = rng.uniform_int(5, 511);
  ids.back() = kSepId;
  Tensor h = encode(model.encoder, ids);
  const double alpha = static_cast<double>(state.range(0)) / 100.0;
  for (auto _ : state) {
    DecodeResult r =
        decode_ratio_first(h, model.crf, model.config.beam_k, alpha);
    benchmark::DoNotOptimize(r.score);
  }
}
BENCHMARK(BM_DecodeRatioFirst)->Arg(30)->Arg(60)->Arg(100);

void BM_EncodeForward(benchmark::State& state) {
  Model model = bench_model();
  std::vector<int> ids(static_cast<size_t>(state.range(0)));
  Rng rng(5);
  ids[0] = kClsId;
  for (size_t i = 1; i + 1 < ids.size(); ++i) ids[i] = rng.uniform_int(5, 511);
  ids.back() = kSepId;
  for (auto _ : state) {
    Tensor h = encode(model.encoder, ids);
    benchmark::DoNotOptimize(h.data());
  }
}
BENCHMARK(BM_EncodeForward)->Arg(16)->Arg(40)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
