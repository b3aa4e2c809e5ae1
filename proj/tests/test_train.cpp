#include <doctest.h>

#include <cmath>
#include <sstream>

#include "crfgen/train.hpp"
#include "test_helpers.hpp"

using namespace crfgen;
using crfgen::testing::max_grad_rel_err;

namespace {

Vocabulary demo_vocab() {
  return Vocabulary::from_tokens({"y1", "y2", "a", "y", "b", "c", "d"});
}

ModelConfig tiny_model_config() {
  ModelConfig config;
  config.encoder.n_layers = 1;
  config.encoder.d_model = 8;
  config.encoder.n_heads = 2;
  config.encoder.d_ffn = 12;
  config.encoder.max_len = 12;
  config.rank_d = 2;
  config.beam_k = 6;
  return config;
}

// Scalar mirror of the context-aware objective, evaluated from raw emission
// scores with plain loops.
double ca_reference(const std::vector<double>& emissions, size_t vocab,
                    const std::vector<int>& targets, int c) {
  double total = 0.0;
  const auto logsumexp_row = [&](size_t i, int excluded) {
    double mx = -1e300;
    for (size_t v = 0; v < vocab; ++v) {
      if (static_cast<int>(v) == excluded) continue;
      mx = std::max(mx, emissions[i * vocab + v]);
    }
    double s = 0.0;
    for (size_t v = 0; v < vocab; ++v) {
      if (static_cast<int>(v) == excluded) continue;
      s += std::exp(emissions[i * vocab + v] - mx);
    }
    return mx + std::log(s);
  };
  for (size_t i = 0; i < targets.size(); ++i) {
    const double lse = logsumexp_row(i, -1);
    total += lse - emissions[i * vocab + static_cast<size_t>(targets[i])];
    std::vector<int> negs;
    for (int j = static_cast<int>(i) - c; j <= static_cast<int>(i) + c; ++j) {
      if (j < 0 || j >= static_cast<int>(targets.size())) continue;
      if (targets[static_cast<size_t>(j)] == targets[i]) continue;
      bool dup = false;
      for (int seen : negs) dup = dup || seen == targets[static_cast<size_t>(j)];
      if (!dup) negs.push_back(targets[static_cast<size_t>(j)]);
    }
    for (int y : negs) total += lse - logsumexp_row(i, y);
  }
  return total;
}

}  // namespace

TEST_CASE("make_example appends two [eos] and aligns to the first positions") {
  Vocabulary vocab = demo_vocab();
  EncoderConfig config;
  config.max_len = 10;
  auto ex = make_example({"a", "b", "c", "d"}, {"y1", "y2"}, vocab, config);
  REQUIRE(ex.has_value());
  CHECK(ex->target_ids == std::vector<int>{vocab.encode("y1"),
                                           vocab.encode("y2"), kEosId,
                                           kEosId});
  CHECK(ex->supervised_len == 4);
  CHECK(ex->source_ids.size() == 6);  // [cls] a b c d [sep]
}

TEST_CASE("make_example of an empty target is the double-eos pair") {
  Vocabulary vocab = demo_vocab();
  EncoderConfig config;
  config.max_len = 8;
  auto ex = make_example({"a", "b"}, {}, vocab, config);
  REQUIRE(ex.has_value());
  CHECK(ex->target_ids == std::vector<int>{kEosId, kEosId});
  CHECK(ex->supervised_len == 2);
}

TEST_CASE("make_example boundary and overflow") {
  Vocabulary vocab = demo_vocab();
  EncoderConfig config;
  config.max_len = 8;
  // Source gives 4 + 2 positions; target of 4 + 2 eos fits exactly.
  auto fit = make_example({"a", "b", "c", "d"}, {"y1", "y2", "y1", "y2"},
                          vocab, config);
  CHECK(fit.has_value());
  auto overflow = make_example({"a", "b", "c", "d"},
                               {"y1", "y2", "y1", "y2", "y1"}, vocab, config);
  CHECK(!overflow.has_value());
  // OOV target tokens would put [unk] into the supervision; skipped too.
  auto oov = make_example({"a", "b", "c"}, {"zzz"}, vocab, config);
  CHECK(!oov.has_value());
}

TEST_CASE("make_example without eos appending (fixed-length variant)") {
  Vocabulary vocab = demo_vocab();
  EncoderConfig config;
  config.max_len = 8;
  auto ex = make_example({"a", "b"}, {"y1", "y2"}, vocab, config, false);
  REQUIRE(ex.has_value());
  CHECK(ex->target_ids == std::vector<int>{vocab.encode("y1"),
                                           vocab.encode("y2")});
  CHECK(ex->supervised_len == 2);
}

TEST_CASE("context_aware_loss with c = 0 is the cross-entropy") {
  const size_t vocab = 8, d_model = 4;
  Rng rng(1);
  CrfParams params = CrfParams::init(d_model, vocab, 2, 8, rng);
  Tensor h = Tensor::uniform({5, d_model}, -1, 1, rng);
  std::vector<int> targets = {5, 6, kEosId};
  Tensor loss = context_aware_loss(h, targets, params, 0);
  Tensor em = ops::slice_rows(label_scores(h, params), 0, 3);
  CHECK(loss.item() ==
        doctest::Approx(ca_reference(em.values(), vocab, targets, 0))
            .epsilon(1e-12));
}

TEST_CASE("context_aware_loss matches the windowed reference") {
  const size_t vocab = 8, d_model = 4;
  Rng rng(2);
  CrfParams params = CrfParams::init(d_model, vocab, 2, 8, rng);
  Tensor h = Tensor::uniform({6, d_model}, -1, 1, rng);
  for (int c : {1, 2, 3}) {
    std::vector<int> targets = {5, 6, 5, kEosId, kEosId};
    Tensor loss = context_aware_loss(h, targets, params, c);
    Tensor em = ops::slice_rows(label_scores(h, params), 0, 5);
    CHECK(loss.item() ==
          doctest::Approx(ca_reference(em.values(), vocab, targets, c))
              .epsilon(1e-12));
  }
}

TEST_CASE("equal neighbors are excluded and duplicates deduplicated") {
  // target "y a y": at the middle position both neighbors are the same
  // distinct token, so exactly one negative term applies there.
  Vocabulary vocab = demo_vocab();
  const int y = vocab.encode("y"), a = vocab.encode("a");
  const size_t v = vocab.size(), d_model = 4;
  Rng rng(3);
  CrfParams params = CrfParams::init(d_model, v, 2, 4, rng);
  Tensor h = Tensor::uniform({3, d_model}, -1, 1, rng);
  std::vector<int> targets = {y, a, y};
  Tensor loss = context_aware_loss(h, targets, params, 1);
  Tensor em = ops::slice_rows(label_scores(h, params), 0, 3);
  const std::vector<double>& e = em.values();
  // Scalar transcript: positions 0 and 2 have the distinct neighbor {a},
  // position 1 has the deduplicated distinct neighbor {y}.
  auto lse = [&](size_t i, int excl) {
    double mx = -1e300, s = 0;
    for (size_t w = 0; w < v; ++w) {
      if (static_cast<int>(w) != excl) mx = std::max(mx, e[i * v + w]);
    }
    for (size_t w = 0; w < v; ++w) {
      if (static_cast<int>(w) != excl) s += std::exp(e[i * v + w] - mx);
    }
    return mx + std::log(s);
  };
  double expect = 0;
  expect += lse(0, -1) - e[0 * v + static_cast<size_t>(y)] +
            (lse(0, -1) - lse(0, a));
  expect += lse(1, -1) - e[1 * v + static_cast<size_t>(a)] +
            (lse(1, -1) - lse(1, y));
  expect += lse(2, -1) - e[2 * v + static_cast<size_t>(y)] +
            (lse(2, -1) - lse(2, a));
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("the double-eos tail adds no negative for its equal neighbor") {
  const size_t vocab = 8, d_model = 4;
  Rng rng(4);
  CrfParams params = CrfParams::init(d_model, vocab, 2, 8, rng);
  Tensor h = Tensor::uniform({2, d_model}, -1, 1, rng);
  std::vector<int> targets = {kEosId, kEosId};
  // Window of 1: every neighbor equals the token itself, so the loss is the
  // plain cross-entropy.
  CHECK(context_aware_loss(h, targets, params, 1).item() ==
        doctest::Approx(context_aware_loss(h, targets, params, 0).item()));
}

TEST_CASE("context-aware loss dominates the bare cross-entropy") {
  const size_t vocab = 9, d_model = 4;
  Rng rng(5);
  CrfParams params = CrfParams::init(d_model, vocab, 2, 9, rng);
  Tensor h = Tensor::uniform({4, d_model}, -1, 1, rng);
  std::vector<int> targets = {5, 6, 7, 8};
  CHECK(context_aware_loss(h, targets, params, 2).item() >=
        context_aware_loss(h, targets, params, 0).item() - 1e-12);
}

TEST_CASE("total_loss composition") {
  Vocabulary vocab = demo_vocab();
  ModelConfig mc = tiny_model_config();
  Model model = Model::init(mc, vocab.size(), 7);
  EncoderConfig ec = mc.encoder;
  auto ex = make_example({"a", "b", "c"}, {"y1", "y2"}, vocab, ec);
  REQUIRE(ex.has_value());
  Tensor h = encode(model.encoder, ex->source_ids);

  TrainConfig tc;
  tc.lambda = 0.0;
  Tensor l0 = total_loss(h, *ex, model.crf, tc);
  Tensor nll = crf_nll(h, ex->target_ids, model.crf, model.crf.beam_k);
  CHECK(l0.item() == nll.item());

  tc.lambda = 1.0;
  tc.window_c = 0;
  Tensor l1 = total_loss(h, *ex, model.crf, tc);
  Tensor ce = context_aware_loss(h, ex->target_ids, model.crf, 0);
  CHECK(l1.item() == doctest::Approx(nll.item() + ce.item()).epsilon(1e-12));
}

TEST_CASE("total_loss gradients pass finite differences on a toy model") {
  Vocabulary vocab = demo_vocab();
  ModelConfig mc = tiny_model_config();
  mc.encoder.n_layers = 2;
  Model model = Model::init(mc, vocab.size(), 11);
  auto ex = make_example({"a", "b", "c"}, {"y1", "y2"}, vocab, mc.encoder);
  REQUIRE(ex.has_value());
  TrainConfig tc;
  tc.lambda = 1.0;
  tc.window_c = 3;
  auto loss = [&]() {
    Tensor h = encode(model.encoder, ex->source_ids);
    return total_loss(h, *ex, model.crf, tc);
  };
  for (auto& [name, tensor] : model.parameters()) {
    INFO(name);
    CHECK(max_grad_rel_err(tensor, loss) < 1e-4);
  }
}

TEST_CASE("positions beyond supervised_len receive zero gradient") {
  Vocabulary vocab = demo_vocab();
  ModelConfig mc = tiny_model_config();
  Model model = Model::init(mc, vocab.size(), 13);
  auto ex = make_example({"a", "b", "c", "d"}, {"y1"}, vocab, mc.encoder);
  REQUIRE(ex.has_value());
  REQUIRE(ex->supervised_len == 3);
  Tensor h = encode(model.encoder, ex->source_ids);
  Tensor frozen = Tensor::from_data(h.shape(), h.values());
  frozen.set_requires_grad(true);
  TrainConfig tc;
  {
    GradientTape tape;
    tape.backward(total_loss(frozen, *ex, model.crf, tc));
  }
  const size_t d = frozen.dim(1);
  for (size_t i = 3; i < frozen.dim(0); ++i) {
    for (size_t j = 0; j < d; ++j) {
      CHECK(frozen.grad()[i * d + j] == 0.0);
    }
  }
}

TEST_CASE("adam leaves parameters untouched under zero gradients") {
  Vocabulary vocab = demo_vocab();
  Model model = Model::init(tiny_model_config(), vocab.size(), 17);
  auto params = model.parameters();
  std::vector<double> before(params[0].second.values());
  for (auto& [name, t] : params) t.zero_grad();
  AdamState state = AdamState::init(params);
  TrainConfig tc;
  adam_step(params, state, tc);
  CHECK(params[0].second.values() == before);
}

TEST_CASE("adam first step from zero state matches the scalar update") {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("p", Tensor::from_data({2}, {1.0, -2.0}));
  params[0].second.set_requires_grad(true);
  double* g = params[0].second.grad();
  g[0] = 0.3;
  g[1] = -0.7;
  AdamState state = AdamState::init(params);
  TrainConfig tc;
  tc.lr = 0.01;
  adam_step(params, state, tc);
  // With zero state, mhat = g and sqrt(vhat) = |g|.
  CHECK(params[0].second.data()[0] ==
        doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + tc.eps)).epsilon(1e-12));
  CHECK(params[0].second.data()[1] ==
        doctest::Approx(-2.0 + 0.01 * 0.7 / (0.7 + tc.eps)).epsilon(1e-12));
}

TEST_CASE("adam under a constant gradient approaches lr-sized steps") {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("p", Tensor::from_data({1}, {0.0}));
  params[0].second.set_requires_grad(true);
  AdamState state = AdamState::init(params);
  TrainConfig tc;
  tc.lr = 0.05;
  double prev = 0.0;
  double step = 0.0;
  for (int i = 0; i < 300; ++i) {
    params[0].second.grad()[0] = 2.5;  // constant gradient
    prev = params[0].second.data()[0];
    adam_step(params, state, tc);
    step = std::fabs(params[0].second.data()[0] - prev);
  }
  CHECK(step == doctest::Approx(tc.lr).epsilon(0.05));
}

TEST_CASE("adam state shape mismatch is rejected") {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("p", Tensor::from_data({2}, {0.0, 0.0}));
  AdamState state = AdamState::init(params);
  params.emplace_back("q", Tensor::from_data({1}, {0.0}));
  TrainConfig tc;
  CHECK_THROWS_AS(adam_step(params, state, tc), ContractError);
}

TEST_CASE("one epoch over one example strictly decreases the loss") {
  Corpus corpus;
  corpus.examples.push_back({{"a", "b", "c", "d"}, {"a", "c"}});
  Vocabulary vocab = build_vocab(corpus, 100);
  ModelConfig mc = tiny_model_config();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 1;
  tc.lr = 1e-3;
  tc.seed = 3;
  std::ostringstream log;
  TrainResult result = train(corpus, Corpus{}, vocab, mc, tc, &log);
  REQUIRE(result.epochs.size() == 2);
  CHECK(result.epochs[1].train_loss < result.epochs[0].train_loss);
}

TEST_CASE("training is deterministic and thread-count independent") {
  TaskSpec spec;
  spec.vocab_size = 20;
  spec.min_len = 4;
  spec.max_len = 8;
  spec.keep_ratio = 0.4;
  spec.n_examples = 12;
  spec.seed = 21;
  Corpus corpus = generate(spec);
  Vocabulary vocab = build_vocab(corpus, 64);
  ModelConfig mc = tiny_model_config();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.seed = 5;

  tc.n_threads = 1;
  TrainResult serial = train(corpus, corpus, vocab, mc, tc, nullptr);
  tc.n_threads = 2;
  TrainResult threaded = train(corpus, corpus, vocab, mc, tc, nullptr);
  TrainResult again = train(corpus, corpus, vocab, mc, tc, nullptr);

  auto ps = serial.best_model.parameters();
  auto pt = threaded.best_model.parameters();
  auto pa = again.best_model.parameters();
  REQUIRE(ps.size() == pt.size());
  for (size_t p = 0; p < ps.size(); ++p) {
    REQUIRE(ps[p].second.size() == pt[p].second.size());
    for (size_t i = 0; i < ps[p].second.size(); ++i) {
      CHECK(ps[p].second.data()[i] == pt[p].second.data()[i]);
      CHECK(pa[p].second.data()[i] == pt[p].second.data()[i]);
    }
  }
}

TEST_CASE("training reports skipped examples") {
  Corpus corpus;
  corpus.examples.push_back({{"a", "b", "c", "d"}, {"a", "c"}});
  corpus.examples.push_back({{"a"}, {"a", "a", "a", "a"}});  // cannot fit
  Vocabulary vocab = build_vocab(corpus, 100);
  ModelConfig mc = tiny_model_config();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  std::ostringstream log;
  TrainResult result = train(corpus, Corpus{}, vocab, mc, tc, &log);
  CHECK(result.skipped_examples == 1);
  CHECK(log.str().find("skipped 1") != std::string::npos);
}
