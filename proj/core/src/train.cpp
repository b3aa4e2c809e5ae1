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

#include "crfgen/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "crfgen/decode.hpp"
#include "crfgen/metrics.hpp"

namespace crfgen {

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
  if (window_c < 0) throw ConfigError("train: window c must be >= 0");
  if (lr <= 0.0) throw ConfigError("train: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (eps <= 0.0) throw ConfigError("train: eps must be positive");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (n_threads < 0) throw ConfigError("train: n_threads must be >= 0");
}

std::map<std::string, std::string> TrainConfig::echo() const {
  char buf[64];
  std::map<std::string, std::string> echo;
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%g", v);
    echo[key] = buf;
  };
  put("train.lambda", lambda);
  echo["train.window_c"] = std::to_string(window_c);
  put("train.lr", lr);
  put("train.beta1", beta1);
  put("train.beta2", beta2);
  put("train.eps", eps);
  echo["train.epochs"] = std::to_string(epochs);
  echo["train.batch_size"] = std::to_string(batch_size);
  echo["train.seed"] = std::to_string(seed);
  put("train.early_stop_f1", early_stop_f1);
  echo["train.append_eos"] = append_eos ? "1" : "0";
  return echo;
}

std::optional<TrainingExample> make_example(
    const std::vector<std::string>& source,
    const std::vector<std::string>& target, const Vocabulary& vocab,
    const EncoderConfig& config, bool append_eos) {
  TrainingExample ex;
  ex.source_ids = build_input(source, vocab, config, config.task_kind());
  ex.target_ids.reserve(target.size() + 2);
  for (const std::string& tok : target) {
    const int id = vocab.encode(tok);
    // A reserved id in the target (an OOV token mapped to [unk]) would break
    // the supervision contract; treat it like an oversized target.
    if (is_reserved_id(id)) return std::nullopt;
    ex.target_ids.push_back(id);
  }
  if (append_eos) {
    ex.target_ids.push_back(kEosId);
    ex.target_ids.push_back(kEosId);
  }
  ex.supervised_len = static_cast<int>(ex.target_ids.size());
  if (ex.supervised_len == 0 ||
      ex.target_ids.size() > ex.source_ids.size()) {
    return std::nullopt;
  }
  return ex;
}

Tensor context_aware_loss(const Tensor& h, std::span<const int> target_ids,
                          const CrfParams& params, int c) {
  if (c < 0) throw ContractError("context_aware_loss: window c must be >= 0");
  if (target_ids.empty()) {
    throw ContractError("context_aware_loss: empty target");
  }
  const size_t len = target_ids.size();
  const size_t vocab = params.vocab_size();
  for (int y : target_ids) {
    if (y < 0 || static_cast<size_t>(y) >= vocab) {
      throw VocabError("context_aware_loss: label " + std::to_string(y) +
                       " outside vocabulary");
    }
  }
  Tensor emissions = ops::slice_rows(label_scores(h, params), 0, len);
  Tensor loss = Tensor::scalar(0.0);
  std::vector<int> negatives;
  for (size_t i = 0; i < len; ++i) {
    Tensor z = ops::row(emissions, i);
    Tensor lse = ops::logsumexp(z);
    // -log p(y_i | h_i)
    Tensor term = ops::sub(lse, ops::pick(z, static_cast<size_t>(target_ids[i])));
    // Distinct window tokens, deduplicated by id; equal neighbors are
    // excluded by the y_j != y_i condition.
    negatives.clear();
    const size_t lo = i >= static_cast<size_t>(c) ? i - static_cast<size_t>(c) : 0;
    const size_t hi = std::min(len - 1, i + static_cast<size_t>(c));
    for (size_t j = lo; j <= hi; ++j) {
      if (target_ids[j] != target_ids[i]) negatives.push_back(target_ids[j]);
    }
    std::sort(negatives.begin(), negatives.end());
    negatives.erase(std::unique(negatives.begin(), negatives.end()),
                    negatives.end());
    for (int y : negatives) {
      // -log(1 - p(y | h_i)) = lse - logsumexp over the other labels
      term = ops::add(
          term, ops::sub(lse, ops::logsumexp_excluding(z, static_cast<size_t>(y))));
    }
    loss = ops::add(loss, term);
  }
  return loss;
}

Tensor total_loss(const Tensor& h, const TrainingExample& example,
                  const CrfParams& params, const TrainConfig& config) {
  Tensor nll = crf_nll(h, example.target_ids, params, params.beam_k);
  if (config.lambda == 0.0) return nll;
  Tensor ca = context_aware_loss(h, example.target_ids, params,
                                 config.window_c);
  return ops::add(nll, ops::scale(ca, config.lambda));
}

AdamState AdamState::init(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& [name, t] : params) {
    state.m.emplace_back(t.size(), 0.0);
    state.v.emplace_back(t.size(), 0.0);
  }
  return state;
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, const TrainConfig& config) {
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: state holds " +
                        std::to_string(state.m.size()) + " buffers for " +
                        std::to_string(params.size()) + " parameters");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[p].second;
    if (state.m[p].size() != t.size()) {
      throw ContractError("adam_step: buffer shape drift on " +
                          params[p].first);
    }
    const double* g = t.grad();
    double* data = t.data();
    double* m = state.m[p].data();
    double* v = state.v[p].data();
    for (size_t i = 0; i < t.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

namespace {

struct DevScores {
  double f1 = 0.0;
  double rep2 = 0.0;
};

DevScores evaluate_dev(Model& model, const Corpus& dev,
                       const Vocabulary& vocab) {
  DevScores scores;
  if (dev.examples.empty()) return scores;
  for (const Corpus::Example& ex : dev.examples) {
    std::vector<int> ids = build_input(ex.source, vocab, model.config.encoder,
                                       model.config.encoder.task_kind());
    Tensor h = encode(model.encoder, ids);
    DecodeResult r = decode_dynamic(h, model.crf, model.config.beam_k);
    std::vector<std::string> output = vocab.decode_all(r.output);
    scores.f1 += token_kept_f1(output, ex.target, ex.source);
    scores.rep2 += rep_n(output, 2);
  }
  scores.f1 /= static_cast<double>(dev.size());
  scores.rep2 /= static_cast<double>(dev.size());
  return scores;
}

}  // namespace

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus,
                  const Vocabulary& vocab, const ModelConfig& model_config,
                  const TrainConfig& train_config, std::ostream* log) {
  model_config.validate();
  train_config.validate();
  if (train_corpus.examples.empty()) {
    throw ContractError("train: empty training corpus");
  }

  TrainResult result;
  std::vector<TrainingExample> examples;
  examples.reserve(train_corpus.size());
  for (const Corpus::Example& ex : train_corpus.examples) {
    auto made = make_example(ex.source, ex.target, vocab, model_config.encoder,
                             train_config.append_eos);
    if (made) {
      examples.push_back(std::move(*made));
    } else {
      ++result.skipped_examples;
    }
  }
  if (result.skipped_examples > 0 && log) {
    (*log) << "# skipped " << result.skipped_examples
           << " examples whose targets do not fit the source positions\n";
  }
  if (examples.empty()) {
    throw ContractError("train: every training example was skipped");
  }

  Model model = Model::init(model_config, vocab.size(), train_config.seed);
  auto params = model.parameters();
  AdamState adam = AdamState::init(params);
  Rng order_rng = Rng(train_config.seed).split(1);

  int n_threads = train_config.n_threads;
  if (n_threads == 0) {
    n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
  }

  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  struct Slot {
    double loss = 0.0;
    GradMap grads;
  };

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;

    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(train_config.batch_size)) {
      const size_t end = std::min(
          order.size(), begin + static_cast<size_t>(train_config.batch_size));
      const size_t batch = end - begin;
      std::vector<Slot> slots(batch);
      std::atomic<size_t> cursor{0};
      std::exception_ptr failure;
      std::mutex failure_mu;

      auto work = [&]() {
        while (true) {
          const size_t slot = cursor.fetch_add(1);
          if (slot >= batch) break;
          try {
            const TrainingExample& ex = examples[order[begin + slot]];
            GradientTape tape;
            Tensor h = encode(model.encoder, ex.source_ids);
            Tensor loss = total_loss(h, ex, model.crf, train_config);
            slots[slot].loss = loss.item();
            slots[slot].grads = tape.backward_collect(loss);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
            break;
          }
        }
      };

      const int workers =
          static_cast<int>(std::min<size_t>(static_cast<size_t>(n_threads), batch));
      if (workers <= 1) {
        work();
      } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
      }
      if (failure) std::rethrow_exception(failure);

      // Batch reduction: mean over examples, summed in slot order so the
      // result does not depend on the thread count.
      const double inv = 1.0 / static_cast<double>(batch);
      for (auto& [name, t] : params) {
        t.zero_grad();
        double* g = t.grad();
        for (size_t s = 0; s < batch; ++s) {
          auto it = slots[s].grads.find(t.state());
          if (it == slots[s].grads.end()) continue;
          const std::vector<double>& src = it->second;
          for (size_t i = 0; i < src.size(); ++i) g[i] += inv * src[i];
        }
      }
      adam_step(params, adam, train_config);
      for (const Slot& s : slots) epoch_loss += s.loss;
    }

    epoch_loss /= static_cast<double>(examples.size());
    const DevScores dev = evaluate_dev(model, dev_corpus, vocab);

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss;
    stats.dev_f1 = dev.f1;
    stats.dev_rep2 = dev.rep2;
    result.epochs.push_back(stats);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.4f\t%.4f\n", epoch,
                    epoch_loss, dev.f1, dev.rep2);
      (*log) << buf;
      log->flush();
    }

    // Ties go to the later epoch; without a dev set the final model wins.
    if (dev_corpus.examples.empty() || result.best_epoch < 0 ||
        dev.f1 >= result.best_f1) {
      result.best_f1 = dev.f1;
      result.best_epoch = epoch;
      result.best_model = model.clone();
    }
    if (train_config.early_stop_f1 >= 0.0 &&
        dev.f1 >= train_config.early_stop_f1) {
      break;
    }
  }
  return result;
}

}  // namespace crfgen
