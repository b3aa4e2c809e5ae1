#include <doctest.h>

#include <cmath>

#include "crfgen/tensor.hpp"
#include "test_helpers.hpp"

using namespace crfgen;
using crfgen::testing::max_grad_rel_err;
using crfgen::testing::rel_err;

TEST_CASE("matmul identity leaves the matrix unchanged") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {3.5, -1.25, 2, 7});
  Tensor out = ops::matmul(eye, m);
  for (size_t i = 0; i < 4; ++i) CHECK(out.data()[i] == m.data()[i]);
}

TEST_CASE("matmul direct arithmetic") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 1}, {0, 1});
  Tensor out = ops::matmul(a, b);
  CHECK(out.shape() == std::vector<size_t>{2, 1});
  CHECK(out.data()[0] == 2.0);
  CHECK(out.data()[1] == 4.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  try {
    ops::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[2, 2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences below 1e-6") {
  Rng rng(42);
  Tensor a = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor b = Tensor::uniform({4, 2}, -1, 1, rng);
  Tensor w = Tensor::uniform({3, 2}, -1, 1, rng);  // fixed mixing weights
  auto loss = [&]() { return ops::sum(ops::mul(ops::matmul(a, b), w)); };
  CHECK(max_grad_rel_err(a, loss) < 1e-6);
  CHECK(max_grad_rel_err(b, loss) < 1e-6);
}

TEST_CASE("softmax of a constant row is uniform") {
  Tensor x = Tensor::from_data({3}, {0, 0, 0});
  Tensor y = ops::softmax(x, 0);
  for (size_t i = 0; i < 3; ++i) CHECK(y.data()[i] == doctest::Approx(1.0 / 3));
}

TEST_CASE("softmax saturates without overflow") {
  Tensor x = Tensor::from_data({3}, {1000, 0, 0});
  Tensor y = ops::softmax(x, 0);
  CHECK(std::fabs(y.data()[0] - 1.0) < 1e-12);
  CHECK(std::fabs(y.data()[1]) < 1e-12);
  CHECK(std::fabs(y.data()[2]) < 1e-12);
}

TEST_CASE("softmax matches the scalar definition") {
  Tensor x = Tensor::from_data({3}, {1, 2, 3});
  Tensor y = ops::softmax(x, 0);
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(std::fabs(y.data()[i] - std::exp(x.data()[i]) / denom) < 1e-12);
  }
}

TEST_CASE("softmax along a middle axis normalizes that axis") {
  Rng rng(7);
  Tensor x = Tensor::uniform({2, 3, 2}, -2, 2, rng);
  Tensor y = ops::softmax(x, 1);
  for (size_t o = 0; o < 2; ++o) {
    for (size_t in = 0; in < 2; ++in) {
      double s = 0;
      for (size_t i = 0; i < 3; ++i) s += y.data()[o * 6 + i * 2 + in];
      CHECK(s == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("backward of sum gives all-ones") {
  Rng rng(1);
  Tensor p = Tensor::uniform({4}, -1, 1, rng);
  p.set_requires_grad(true);
  GradientTape tape;
  tape.backward(ops::sum(p));
  for (size_t i = 0; i < 4; ++i) CHECK(p.grad()[i] == 1.0);
}

TEST_CASE("backward of sum of squares gives 2p") {
  Rng rng(2);
  Tensor p = Tensor::uniform({5}, -1, 1, rng);
  p.set_requires_grad(true);
  GradientTape tape;
  tape.backward(ops::sum(ops::mul(p, p)));
  for (size_t i = 0; i < 5; ++i) {
    CHECK(p.grad()[i] == doctest::Approx(2.0 * p.data()[i]));
  }
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor p = Tensor::zeros({3});
  p.set_requires_grad(true);
  GradientTape tape;
  Tensor y = ops::scale(p, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("unreachable parameters read zero gradient") {
  Tensor used = Tensor::full({2}, 1.0);
  Tensor unused = Tensor::full({2}, 1.0);
  used.set_requires_grad(true);
  unused.set_requires_grad(true);
  GradientTape tape;
  tape.backward(ops::sum(used));
  CHECK(unused.grad()[0] == 0.0);
  CHECK(unused.grad()[1] == 0.0);
}

TEST_CASE("diamond graph accumulates before propagating") {
  Tensor x = Tensor::from_data({1}, {2.0});
  x.set_requires_grad(true);
  GradientTape tape;
  Tensor u = ops::add(x, Tensor::scalar(1.0));
  Tensor y = ops::add(ops::scale(u, 2.0), ops::scale(u, 3.0));
  tape.backward(ops::sum(y));
  CHECK(x.grad()[0] == 5.0);
}

TEST_CASE("second tape on the same thread is rejected") {
  GradientTape tape;
  CHECK_THROWS_AS(GradientTape(), ContractError);
}

TEST_CASE("elementwise and reduction gradients pass finite differences") {
  Rng rng(3);
  Tensor x = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor other = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor w = Tensor::uniform({3, 4}, -1, 1, rng);

  SUBCASE("add") {
    auto f = [&]() { return ops::sum(ops::mul(ops::add(x, other), w)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("sub") {
    auto f = [&]() { return ops::sum(ops::mul(ops::sub(x, other), w)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("mul") {
    auto f = [&]() { return ops::sum(ops::mul(ops::mul(x, other), w)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("scale") {
    auto f = [&]() { return ops::sum(ops::mul(ops::scale(x, -1.7), w)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("relu off the kink") {
    // Shift values away from zero so the finite-difference step cannot
    // cross the non-differentiable point.
    for (size_t i = 0; i < x.size(); ++i) {
      if (std::fabs(x.data()[i]) < 1e-3) x.data()[i] = 0.25;
    }
    auto f = [&]() { return ops::sum(ops::mul(ops::relu(x), w)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("softmax rows") {
    auto f = [&]() { return ops::sum(ops::mul(ops::softmax(x, 1), w)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("transpose") {
    Tensor wt = Tensor::uniform({4, 3}, -1, 1, rng);
    auto f = [&]() { return ops::sum(ops::mul(ops::transpose(x), wt)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("reshape") {
    Tensor wr = Tensor::uniform({12}, -1, 1, rng);
    auto f = [&]() {
      return ops::sum(ops::mul(ops::reshape(x, {12}), wr));
    };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
}

TEST_CASE("log gradient and domain") {
  Rng rng(4);
  Tensor x = Tensor::uniform({6}, 0.2, 2.0, rng);
  Tensor w = Tensor::uniform({6}, -1, 1, rng);
  auto f = [&]() { return ops::sum(ops::mul(ops::log(x), w)); };
  CHECK(max_grad_rel_err(x, f) < 1e-4);
  Tensor bad = Tensor::from_data({2}, {1.0, -0.5});
  CHECK_THROWS_AS(ops::log(bad), ContractError);
}

TEST_CASE("matmul_nt matches matmul with explicit transpose") {
  Rng rng(5);
  Tensor a = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor b = Tensor::uniform({5, 4}, -1, 1, rng);
  Tensor direct = ops::matmul_nt(a, b);
  Tensor expect = ops::matmul(a, ops::transpose(b));
  REQUIRE(direct.shape() == expect.shape());
  for (size_t i = 0; i < direct.size(); ++i) {
    CHECK(direct.data()[i] == doctest::Approx(expect.data()[i]));
  }
  Tensor w = Tensor::uniform({3, 5}, -1, 1, rng);
  auto f = [&]() { return ops::sum(ops::mul(ops::matmul_nt(a, b), w)); };
  CHECK(max_grad_rel_err(a, f) < 1e-4);
  CHECK(max_grad_rel_err(b, f) < 1e-4);
}

TEST_CASE("layer_norm normalizes rows and passes the gradient check") {
  Rng rng(6);
  Tensor x = Tensor::uniform({3, 8}, -1, 1, rng);
  Tensor gain = Tensor::full({8}, 1.0);
  Tensor bias = Tensor::zeros({8});
  Tensor y = ops::layer_norm(x, gain, bias);
  for (size_t i = 0; i < 3; ++i) {
    double mu = 0;
    for (size_t j = 0; j < 8; ++j) mu += y.at(i, j);
    CHECK(std::fabs(mu / 8.0) < 1e-12);
  }
  Tensor w = Tensor::uniform({3, 8}, -1, 1, rng);
  auto f = [&]() {
    return ops::sum(ops::mul(ops::layer_norm(x, gain, bias), w));
  };
  CHECK(max_grad_rel_err(x, f) < 1e-4);
  CHECK(max_grad_rel_err(gain, f) < 1e-4);
  CHECK(max_grad_rel_err(bias, f) < 1e-4);
}

TEST_CASE("embedding lookup gathers rows and scatter-adds gradients") {
  Rng rng(7);
  Tensor table = Tensor::uniform({5, 3}, -1, 1, rng);
  std::vector<int> ids = {4, 0, 4, 2};
  Tensor out = ops::embedding_lookup(table, ids);
  REQUIRE(out.shape() == std::vector<size_t>{4, 3});
  for (size_t j = 0; j < 3; ++j) {
    CHECK(out.at(0, j) == table.at(4, j));
    CHECK(out.at(2, j) == table.at(4, j));
  }
  table.set_requires_grad(true);
  table.zero_grad();
  {
    GradientTape tape;
    tape.backward(ops::sum(ops::embedding_lookup(table, ids)));
  }
  // Row 4 appears twice, rows 1 and 3 never.
  CHECK(table.grad()[4 * 3] == 2.0);
  CHECK(table.grad()[0] == 1.0);
  CHECK(table.grad()[1 * 3] == 0.0);
  CHECK(table.grad()[3 * 3] == 0.0);
  CHECK_THROWS_AS(ops::embedding_lookup(table, std::vector<int>{5}),
                  VocabError);
}

TEST_CASE("slice, concat, row and pick route gradients to the right cells") {
  Rng rng(8);
  Tensor x = Tensor::uniform({3, 6}, -1, 1, rng);
  SUBCASE("slice_cols") {
    Tensor w = Tensor::uniform({3, 2}, -1, 1, rng);
    auto f = [&]() { return ops::sum(ops::mul(ops::slice_cols(x, 2, 2), w)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("slice_rows") {
    Tensor w = Tensor::uniform({2, 6}, -1, 1, rng);
    auto f = [&]() { return ops::sum(ops::mul(ops::slice_rows(x, 1, 2), w)); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("concat_cols") {
    Tensor w = Tensor::uniform({3, 8}, -1, 1, rng);
    auto f = [&]() {
      return ops::sum(ops::mul(
          ops::concat_cols({ops::slice_cols(x, 0, 3), ops::slice_cols(x, 1, 3),
                            ops::slice_cols(x, 4, 2)}),
          w));
    };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
  SUBCASE("row and pick") {
    auto f = [&]() { return ops::pick(ops::row(x, 1), 4); };
    CHECK(max_grad_rel_err(x, f) < 1e-4);
  }
}

TEST_CASE("logsumexp family is stable and differentiable") {
  Tensor big = Tensor::from_data({3}, {1000.0, 999.0, -2000.0});
  CHECK(ops::logsumexp(big).item() ==
        doctest::Approx(1000.0 + std::log(1.0 + std::exp(-1.0))));
  Rng rng(9);
  Tensor x = Tensor::uniform({7}, -1, 1, rng);
  auto f = [&]() { return ops::logsumexp(x); };
  CHECK(max_grad_rel_err(x, f) < 1e-4);
  auto g = [&]() { return ops::logsumexp_excluding(x, 3); };
  CHECK(max_grad_rel_err(x, g) < 1e-4);
  // Excluding an index removes exactly its share of the sum.
  double manual = 0.0;
  for (size_t i = 0; i < 7; ++i) {
    if (i != 3) manual += std::exp(x.data()[i]);
  }
  CHECK(ops::logsumexp_excluding(x, 3).item() ==
        doctest::Approx(std::log(manual)));
}

TEST_CASE("masked softmax zeroes masked keys and keeps gradients") {
  Rng rng(10);
  Tensor scores = Tensor::uniform({2, 4}, -1, 1, rng);
  std::vector<uint8_t> mask = {1, 0, 1, 0};
  Tensor y = ops::masked_softmax(scores, mask);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(y.at(i, 1) == 0.0);
    CHECK(y.at(i, 3) == 0.0);
    CHECK(y.at(i, 0) + y.at(i, 2) == doctest::Approx(1.0));
  }
  Tensor w = Tensor::uniform({2, 4}, -1, 1, rng);
  auto f = [&]() {
    return ops::sum(ops::mul(ops::masked_softmax(scores, mask), w));
  };
  CHECK(max_grad_rel_err(scores, f) < 1e-4);
  CHECK_THROWS_AS(ops::masked_softmax(scores, std::vector<uint8_t>{0, 0, 0, 0}),
                  ContractError);
}

TEST_CASE("forward results are deterministic under a fixed seed") {
  Rng a(123), b(123);
  Tensor x = Tensor::uniform({4, 4}, -1, 1, a);
  Tensor y = Tensor::uniform({4, 4}, -1, 1, b);
  for (size_t i = 0; i < x.size(); ++i) CHECK(x.data()[i] == y.data()[i]);
  Tensor px = ops::softmax(ops::matmul(x, y), 1);
  Tensor py = ops::softmax(ops::matmul(x, y), 1);
  for (size_t i = 0; i < px.size(); ++i) CHECK(px.data()[i] == py.data()[i]);
}

TEST_CASE("round-half-to-even") {
  CHECK(round_half_even(0.5) == 0);
  CHECK(round_half_even(1.5) == 2);
  CHECK(round_half_even(2.5) == 2);
  CHECK(round_half_even(3.5) == 4);
  CHECK(round_half_even(2.4) == 2);
  CHECK(round_half_even(2.6) == 3);
  CHECK(round_half_even(0.3 * 10) == 3);
  CHECK(round_half_even_min1(0.04) == 1);
}
