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
// Command-line entry point: data generation, training, decoding, evaluation,
// benchmarking and the brute-force oracle suites.
//
// Exit codes: 0 success, 2 usage error, 3 I/O error, 4 invariant/config
// error, 5 oracle-suite failure.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "crfgen/bench.hpp"
#include "crfgen/checkpoint.hpp"
#include "crfgen/common.hpp"
#include "crfgen/data.hpp"
#include "crfgen/decode.hpp"
#include "crfgen/metrics.hpp"
#include "crfgen/model.hpp"
#include "crfgen/train.hpp"

namespace {

using namespace crfgen;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitConfig = 4;
constexpr int kExitOracle = 5;

void write_echo(std::ostream& out, const std::map<std::string, std::string>& echo,
                const char* prefix = "") {
  for (const auto& [k, v] : echo) out << prefix << k << ": " << v << "\n";
}

// ---------------------------------------------------------------------------
// make-data

struct MakeDataArgs {
  std::string task = "compression";
  TaskSpec spec;
  int train_count = 10000;
  int dev_count = 1000;
  int test_count = 1000;
  std::string out_dir = ".";
};

int cmd_make_data(const MakeDataArgs& args) {
  TaskSpec spec = args.spec;
  spec.kind = parse_task_type(args.task);

  auto emit = [&](const char* name, int count, uint64_t seed_offset) {
    TaskSpec split = spec;
    split.n_examples = count;
    split.seed = spec.seed + seed_offset;
    Corpus corpus = generate(split);
    save_corpus(corpus, args.out_dir + "/" + name);
    return corpus;
  };
  Corpus train_corpus = emit("train.tsv", args.train_count, 0);
  emit("dev.tsv", args.dev_count, 1);
  emit("test.tsv", args.test_count, 2);

  const std::string stats_path = args.out_dir + "/stats.txt";
  std::ofstream stats_out(stats_path);
  if (!stats_out) throw IoError("cannot write stats report " + stats_path);
  std::map<std::string, std::string> echo;
  echo["task.kind"] = task_type_name(spec.kind);
  echo["task.vocab_size"] = std::to_string(spec.vocab_size);
  echo["task.min_len"] = std::to_string(spec.min_len);
  echo["task.max_len"] = std::to_string(spec.max_len);
  echo["task.keep_ratio"] = std::to_string(spec.keep_ratio);
  echo["task.repetition_bias"] = std::to_string(spec.repetition_bias);
  echo["task.seed"] = std::to_string(spec.seed);
  echo["task.train_count"] = std::to_string(args.train_count);
  echo["task.dev_count"] = std::to_string(args.dev_count);
  echo["task.test_count"] = std::to_string(args.test_count);
  write_echo(stats_out, echo);
  stats_out << corpus_stats(train_corpus).to_text();
  if (!stats_out) throw IoError("failed writing stats report " + stats_path);
  std::cout << "wrote " << args.out_dir << "/{train,dev,test}.tsv and stats.txt\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string train_path, dev_path;
  std::string checkpoint_path = "model.ckpt";
  std::string vocab_out;
  std::string log_path;
  int vocab_max = 10000;
  ModelConfig model;
  TrainConfig config;
};

int cmd_train(const TrainArgs& args) {
  Corpus train_corpus = load_corpus(args.train_path);
  Corpus dev_corpus;
  if (!args.dev_path.empty()) dev_corpus = load_corpus(args.dev_path);

  Vocabulary vocab = build_vocab(train_corpus, static_cast<size_t>(args.vocab_max));

  std::ofstream log_file;
  std::ostream* log = &std::cerr;
  if (!args.log_path.empty()) {
    log_file.open(args.log_path);
    if (!log_file) throw IoError("cannot write training log " + args.log_path);
    log = &log_file;
  }
  std::map<std::string, std::string> echo = args.config.echo();
  echo["train.corpus"] = args.train_path;
  echo["train.dev_corpus"] = args.dev_path;
  echo["train.vocab_max"] = std::to_string(args.vocab_max);
  write_echo(*log, echo, "# ");

  TrainResult result =
      train(train_corpus, dev_corpus, vocab, args.model, args.config, log);

  Model best = result.best_epoch >= 0
                   ? std::move(result.best_model)
                   : Model::init(args.model, vocab.size(), args.config.seed);
  save_checkpoint(args.checkpoint_path, best, echo);
  const std::string vocab_path =
      args.vocab_out.empty() ? args.checkpoint_path + ".vocab" : args.vocab_out;
  vocab.save(vocab_path);

  std::cout << "best epoch " << result.best_epoch << " dev F1 "
            << result.best_f1 << ", checkpoint " << args.checkpoint_path
            << ", vocab " << vocab_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
  std::string checkpoint_path, vocab_path, input_path, out_path;
  std::string strategy = "dynamic";
  double alpha = 1.0;
  std::vector<int> lengths;
  int beam_k = 0;  // 0 keeps the checkpoint value
  bool report_latency = false;
};

DecodeConfig decode_config_from(const DecodeArgs& args, const Model& model) {
  DecodeConfig config;
  if (args.strategy == "dynamic") {
    config.strategy = DecodeStrategy::dynamic;
  } else if (args.strategy == "ratio_first") {
    config.strategy = DecodeStrategy::ratio_first;
  } else if (args.strategy == "fixed_length") {
    config.strategy = DecodeStrategy::fixed_length;
  } else {
    throw ConfigError("decode: unknown strategy '" + args.strategy + "'");
  }
  config.alpha = args.alpha;
  config.fixed_lengths = args.lengths;
  config.beam_k = args.beam_k > 0 ? args.beam_k : model.config.beam_k;
  config.validate();
  return config;
}

int cmd_decode(const DecodeArgs& args) {
  LoadedCheckpoint loaded = load_checkpoint(args.checkpoint_path);
  Vocabulary vocab = Vocabulary::load(args.vocab_path);
  if (vocab.size() != loaded.model.vocab_size()) {
    throw ConfigError("decode: vocabulary of " + std::to_string(vocab.size()) +
                      " tokens does not match checkpoint vocab_size " +
                      std::to_string(loaded.model.vocab_size()));
  }
  Corpus corpus = load_corpus(args.input_path);
  DecodeConfig config = decode_config_from(args, loaded.model);

  const TaskKind kind = loaded.model.config.encoder.task_kind();
  std::vector<DecodeFileEntry> entries;
  entries.reserve(corpus.size());
  for (size_t e = 0; e < corpus.size(); ++e) {
    const Corpus::Example& ex = corpus.examples[e];
    std::vector<int> ids =
        build_input(ex.source, vocab, loaded.model.config.encoder, kind);
    Tensor h = encode(loaded.model.encoder, ids);
    DecodeResult r = run_decode(h, loaded.model.crf, config);
    DecodeFileEntry entry;
    entry.id = static_cast<int64_t>(e);
    entry.output = vocab.decode_all(r.output);
    entry.score = r.score;
    entry.latency_ns = args.report_latency ? r.latency_ns : 0;
    entries.push_back(std::move(entry));
  }
  write_decode_file(args.out_path, entries);

  // The decode file itself stays byte-reproducible; the resolved
  // configuration goes to a sidecar.
  std::ofstream side(args.out_path + ".config");
  if (!side) throw IoError("cannot write " + args.out_path + ".config");
  std::map<std::string, std::string> echo = loaded.model.config_echo();
  echo["decode.strategy"] = config.to_string();
  echo["decode.input"] = args.input_path;
  echo["decode.checkpoint"] = args.checkpoint_path;
  echo["decode.report_latency"] = args.report_latency ? "1" : "0";
  write_echo(side, echo);
  std::cout << "decoded " << entries.size() << " examples to " << args.out_path
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string decode_path, refs_path, report_path;
};

int cmd_eval(const EvalArgs& args) {
  std::vector<DecodeFileEntry> entries = read_decode_file(args.decode_path);
  Corpus refs = load_corpus(args.refs_path);
  if (entries.size() != refs.size()) {
    throw ContractError("eval: " + std::to_string(entries.size()) +
                        " decoded examples vs " + std::to_string(refs.size()) +
                        " references");
  }
  std::vector<Tokens> outputs, references, sources;
  double latency_sum = 0.0;
  for (size_t e = 0; e < entries.size(); ++e) {
    if (entries[e].id < 0 ||
        static_cast<size_t>(entries[e].id) >= refs.size()) {
      throw ContractError("eval: decode line " + std::to_string(e + 1) +
                          " refers to example " +
                          std::to_string(entries[e].id));
    }
    const Corpus::Example& ref = refs.examples[static_cast<size_t>(entries[e].id)];
    outputs.push_back(entries[e].output);
    references.push_back(ref.target);
    sources.push_back(ref.source);
    latency_sum += static_cast<double>(entries[e].latency_ns);
  }
  MetricReport report = evaluate_outputs(outputs, references, sources);
  report.mean_latency_ns = latency_sum / static_cast<double>(entries.size());

  std::ostringstream text;
  text << "eval.decode_file: " << args.decode_path << "\n";
  text << "eval.refs: " << args.refs_path << "\n";
  text << report.to_text();
  if (!args.report_path.empty()) {
    std::ofstream out(args.report_path);
    if (!out) throw IoError("cannot write report " + args.report_path);
    out << text.str();
  } else {
    std::cout << text.str();
  }
  std::cout << "# " << MetricReport::tsv_header() << "\n"
            << report.to_tsv_row() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string checkpoint_path, vocab_path, input_path, report_path;
  std::vector<std::string> config_texts;
  std::string timing = "end_to_end";
  int warmup = 2;
  double baseline_latency_ns = 0.0;
};

int cmd_bench(const BenchArgs& args) {
  LoadedCheckpoint loaded = load_checkpoint(args.checkpoint_path);
  Vocabulary vocab = Vocabulary::load(args.vocab_path);
  Corpus corpus = load_corpus(args.input_path);

  std::vector<DecodeConfig> configs;
  for (const std::string& text : args.config_texts) {
    DecodeConfig c = parse_decode_config(text);
    if (c.beam_k == 256 && text.find("k=") == std::string::npos) {
      c.beam_k = loaded.model.config.beam_k;
    }
    configs.push_back(c);
  }
  TimingScope scope;
  if (args.timing == "end_to_end") {
    scope = TimingScope::end_to_end;
  } else if (args.timing == "decode_only") {
    scope = TimingScope::decode_only;
  } else {
    throw ConfigError("bench: unknown timing scope '" + args.timing + "'");
  }
  std::optional<double> baseline;
  if (args.baseline_latency_ns > 0.0) baseline = args.baseline_latency_ns;

  BenchmarkReport report = run_benchmark(loaded.model, corpus, vocab, configs,
                                         scope, args.warmup, baseline);
  std::ostringstream text;
  write_echo(text, loaded.model.config_echo(), "model.");
  text << report.to_text();
  if (!args.report_path.empty()) {
    std::ofstream out(args.report_path);
    if (!out) throw IoError("cannot write report " + args.report_path);
    out << text.str();
    std::cout << "wrote benchmark report " << args.report_path << "\n";
  } else {
    std::cout << text.str();
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle-check

struct OracleArgs {
  int max_vocab = 6;
  int max_len = 5;
  int cases = 200;
  uint64_t seed = 1;
};

int cmd_oracle_check(const OracleArgs& args) {
  if (args.max_vocab < 4 || args.max_vocab > 12) {
    throw ConfigError("oracle-check: max-vocab must lie in [4, 12]");
  }
  if (args.max_len < 1 || args.cases < 1) {
    throw ConfigError("oracle-check: max-len and cases must be positive");
  }
  Rng rng(args.seed);
  int partition_fail = 0, viterbi_fail = 0, path_fail = 0, monotone_fail = 0;

  for (int c = 0; c < args.cases; ++c) {
    const size_t vocab = static_cast<size_t>(rng.uniform_int(4, args.max_vocab));
    const size_t len = static_cast<size_t>(rng.uniform_int(1, args.max_len));
    const int rank = rng.uniform_int(1, 4);
    Rng init = rng.split(static_cast<uint64_t>(c));
    CrfParams params = CrfParams::init(2, vocab, rank, 2, init);
    std::vector<double> emissions(len * vocab);
    for (double& v : emissions) v = init.uniform(-1.0, 1.0);

    const int k_full = static_cast<int>(vocab);
    Lattice lattice = build_lattice(emissions, len, vocab, k_full);

    const double exact = exact_oracle_partition(emissions, len, vocab, params);
    const double dp = log_partition(lattice, params);
    if (std::fabs(dp - exact) >
        1e-9 * std::max({std::fabs(dp), std::fabs(exact), 1.0})) {
      ++partition_fail;
    }

    ViterbiResult expect = exact_oracle_viterbi(emissions, len, vocab, params);
    ViterbiResult got = viterbi(lattice, params);
    if (got.labels != expect.labels ||
        std::fabs(got.score - expect.score) >
            1e-9 * std::max(1.0, std::fabs(expect.score))) {
      ++viterbi_fail;
    }

    // path_score against a dense transition matrix evaluation
    std::vector<int> labels(len);
    for (size_t i = 0; i < len; ++i) {
      labels[i] = init.uniform_int(0, static_cast<int>(vocab) - 1);
    }
    double dense = emissions[static_cast<size_t>(labels[0])];
    for (size_t i = 1; i < len; ++i) {
      double t = 0.0;
      for (int l = 0; l < rank; ++l) {
        t += params.e1.data()[labels[i - 1] * rank + l] *
             params.e2.data()[labels[i] * rank + l];
      }
      dense += emissions[i * vocab + static_cast<size_t>(labels[i])] + t;
    }
    const double ps = path_score(emissions, vocab, labels, params);
    if (std::fabs(ps - dense) > 1e-12 * std::max(1.0, std::fabs(dense))) {
      ++path_fail;
    }

    // truncation monotonicity of the beam-restricted normalizer
    double prev = -1e300;
    for (int k = 2; k <= k_full; ++k) {
      Lattice trunc = build_lattice(emissions, len, vocab, k);
      const double z = log_partition(trunc, params);
      if (z < prev - 1e-9) ++monotone_fail;
      prev = z;
    }
  }

  auto suite = [&](const char* name, int fails) {
    std::cout << name << ": " << (fails == 0 ? "pass" : "FAIL") << " ("
              << args.cases - fails << "/" << args.cases << ")\n";
  };
  suite("partition_vs_enumeration", partition_fail);
  suite("viterbi_vs_enumeration", viterbi_fail);
  suite("path_score_vs_dense", path_fail);
  suite("truncation_monotonicity", monotone_fail);
  const bool ok =
      partition_fail + viterbi_fail + path_fail + monotone_fail == 0;
  std::cout << "oracle-check: " << (ok ? "pass" : "FAIL") << "\n";
  return ok ? kExitOk : kExitOracle;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-autoregressive text generation with a low-rank CRF head"};
  app.require_subcommand(1);
  app.set_config("--config", "", "config file with key = value lines");

  MakeDataArgs md;
  CLI::App* make_data = app.add_subcommand("make-data", "generate a synthetic corpus");
  make_data->add_option("--task", md.task,
                        "compression | noisy-copy | substitution-translation");
  make_data->add_option("--vocab-size", md.spec.vocab_size);
  make_data->add_option("--min-len", md.spec.min_len);
  make_data->add_option("--max-len", md.spec.max_len);
  make_data->add_option("--keep-ratio", md.spec.keep_ratio);
  make_data->add_option("--repetition-bias", md.spec.repetition_bias);
  make_data->add_option("--train-count", md.train_count);
  make_data->add_option("--dev-count", md.dev_count);
  make_data->add_option("--test-count", md.test_count);
  make_data->add_option("--seed", md.spec.seed);
  make_data->add_option("--out-dir", md.out_dir);

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--train", tr.train_path)->required();
  train_cmd->add_option("--dev", tr.dev_path);
  train_cmd->add_option("--checkpoint", tr.checkpoint_path);
  train_cmd->add_option("--vocab-out", tr.vocab_out);
  train_cmd->add_option("--log", tr.log_path);
  train_cmd->add_option("--vocab-max", tr.vocab_max);
  train_cmd->add_option("--layers", tr.model.encoder.n_layers);
  train_cmd->add_option("--d-model", tr.model.encoder.d_model);
  train_cmd->add_option("--heads", tr.model.encoder.n_heads);
  train_cmd->add_option("--d-ffn", tr.model.encoder.d_ffn);
  train_cmd->add_option("--max-len", tr.model.encoder.max_len);
  train_cmd->add_flag("--pad-to-max", tr.model.encoder.pad_to_max);
  train_cmd->add_option("--rank-d", tr.model.rank_d);
  train_cmd->add_option("--beam-k", tr.model.beam_k);
  train_cmd->add_option("--lambda", tr.config.lambda);
  train_cmd->add_option("--window-c", tr.config.window_c);
  train_cmd->add_option("--lr", tr.config.lr);
  train_cmd->add_option("--beta1", tr.config.beta1);
  train_cmd->add_option("--beta2", tr.config.beta2);
  train_cmd->add_option("--adam-eps", tr.config.eps);
  train_cmd->add_option("--epochs", tr.config.epochs);
  train_cmd->add_option("--batch-size", tr.config.batch_size);
  train_cmd->add_option("--seed", tr.config.seed);
  train_cmd->add_option("--early-stop-f1", tr.config.early_stop_f1);
  train_cmd->add_option("--threads", tr.config.n_threads);
  train_cmd
      ->add_flag("--no-eos-targets", "train without the two appended [eos]")
      ->each([&tr](const std::string&) { tr.config.append_eos = false; });

  DecodeArgs dc;
  CLI::App* decode_cmd = app.add_subcommand("decode", "decode a corpus");
  decode_cmd->add_option("--checkpoint", dc.checkpoint_path)->required();
  decode_cmd->add_option("--vocab", dc.vocab_path)->required();
  decode_cmd->add_option("--input", dc.input_path)->required();
  decode_cmd->add_option("--out", dc.out_path)->required();
  decode_cmd->add_option("--strategy", dc.strategy,
                         "dynamic | ratio_first | fixed_length");
  decode_cmd->add_option("--alpha", dc.alpha);
  decode_cmd->add_option("--lengths", dc.lengths)->delimiter(',');
  decode_cmd->add_option("--beam-k", dc.beam_k);
  decode_cmd->add_flag("--report-latency", dc.report_latency,
                       "emit wall-clock latencies (breaks byte reproducibility)");
  uint64_t decode_seed = 0;
  decode_cmd->add_option("--seed", decode_seed, "accepted for interface symmetry");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a decode output file");
  eval_cmd->add_option("--decode", ev.decode_path)->required();
  eval_cmd->add_option("--refs", ev.refs_path)->required();
  eval_cmd->add_option("--report", ev.report_path);

  BenchArgs bn;
  CLI::App* bench_cmd = app.add_subcommand("bench", "latency benchmark");
  bench_cmd->add_option("--checkpoint", bn.checkpoint_path)->required();
  bench_cmd->add_option("--vocab", bn.vocab_path)->required();
  bench_cmd->add_option("--input", bn.input_path)->required();
  bench_cmd->add_option("--decode-config", bn.config_texts,
                        "repeatable decode config, e.g. ratio_first:alpha=0.3")
      ->required();
  bench_cmd->add_option("--timing", bn.timing, "end_to_end | decode_only");
  bench_cmd->add_option("--warmup", bn.warmup);
  bench_cmd->add_option("--baseline-latency-ns", bn.baseline_latency_ns);
  bench_cmd->add_option("--report", bn.report_path);

  OracleArgs oc;
  CLI::App* oracle_cmd =
      app.add_subcommand("oracle-check", "run the brute-force oracle suites");
  oracle_cmd->add_option("--max-vocab", oc.max_vocab);
  oracle_cmd->add_option("--max-len", oc.max_len);
  oracle_cmd->add_option("--cases", oc.cases);
  oracle_cmd->add_option("--seed", oc.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (make_data->parsed()) return cmd_make_data(md);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (decode_cmd->parsed()) return cmd_decode(dc);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (bench_cmd->parsed()) return cmd_bench(bn);
    if (oracle_cmd->parsed()) return cmd_oracle_check(oc);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitUsage;
}
