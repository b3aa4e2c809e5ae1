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
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "crfgen/common.hpp"

namespace crfgen {

class GradientTape;

namespace detail {

struct TensorState {
  std::vector<size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  // Node handle on the tape that recorded this tensor, if any.
  GradientTape* tape = nullptr;
  int tape_node = -1;
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats. Copies are shallow handles onto
// shared storage; a tensor without an active tape is a plain immutable value.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape);
  static Tensor full(std::vector<size_t> shape, double value);
  static Tensor from_data(std::vector<size_t> shape, std::vector<double> data);
  static Tensor scalar(double value);
  static Tensor uniform(std::vector<size_t> shape, double lo, double hi,
                        Rng& rng);

  bool defined() const { return st_ != nullptr; }
  const std::vector<size_t>& shape() const { return st_->shape; }
  size_t rank() const { return st_->shape.size(); }
  size_t dim(size_t i) const { return st_->shape[i]; }
  size_t size() const { return st_->data.size(); }
  bool is_scalar() const;

  double* data() { return st_->data.data(); }
  const double* data() const { return st_->data.data(); }
  std::vector<double>& values() { return st_->data; }
  const std::vector<double>& values() const { return st_->data; }

  // Scalar extraction; throws ContractError on non-scalars.
  double item() const;
  // Element access for 2-d tensors (test and setup convenience).
  double at(size_t i, size_t j) const;
  void set(size_t i, size_t j, double v);

  bool requires_grad() const { return st_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    st_->requires_grad = b;
    return *this;
  }

  // Gradient buffer, zero-initialized on first access.
  double* grad();
  const std::vector<double>& grad_values();
  void zero_grad();

  // Deep copy of values (no grad, no tape linkage).
  Tensor clone() const;

  detail::TensorState* state() const { return st_.get(); }
  std::shared_ptr<detail::TensorState> shared_state() const { return st_; }

  int tape_node() const { return st_->tape_node; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorState> st)
      : st_(std::move(st)) {}
  std::shared_ptr<detail::TensorState> st_;

  friend class GradientTape;
};

// Gradients keyed by tensor identity; used when several backward passes must
// be reduced deterministically (per-example batch gradients).
using GradMap = std::unordered_map<detail::TensorState*, std::vector<double>>;

// Records forward operations and replays them in reverse. One tape may be
// active per thread; recording starts when the tape is constructed and stops
// when it is destroyed.
class GradientTape {
 public:
  // out_grad is the upstream gradient of the node's output.
  using BackwardFn = std::function<void(const double* out_grad)>;

  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active();

  // Runs the reverse pass and accumulates gradients into the grad buffers of
  // every requires_grad tensor reachable from `loss`. May be called once.
  void backward(const Tensor& loss);

  // Same reverse pass but gradients are returned instead of being written to
  // the tensors, so independent passes can run concurrently and be reduced
  // in a fixed order afterwards.
  GradMap backward_collect(const Tensor& loss);

  size_t node_count() const { return nodes_.size(); }

  // Recording interface used by operations (including custom ops in other
  // modules). `inputs` are the tensors the backward closure will push
  // gradients into via grad_buffer().
  bool should_record(std::initializer_list<const Tensor*> inputs) const;
  void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

  // Gradient accumulation buffer for a tensor during the reverse pass.
  double* grad_buffer(const detail::TensorState* st);
  const double* find_grad(const detail::TensorState* st) const;

 private:
  struct Node {
    std::shared_ptr<detail::TensorState> out;
    std::vector<std::shared_ptr<detail::TensorState>> inputs;
    BackwardFn fn;
  };

  void run_reverse(const Tensor& loss);

  std::vector<Node> nodes_;
  std::unordered_map<const detail::TensorState*, std::vector<double>> grads_;
  bool consumed_ = false;
};

// Convenience for modules defining custom differentiable operations.
void tape_record(const Tensor& output, std::vector<Tensor> inputs,
                 GradientTape::BackwardFn fn);

namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// a: [m x n], bias: [n], broadcast over rows.
Tensor add_row_broadcast(const Tensor& a, const Tensor& bias);

// a: [m x k], b: [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a: [m x k], b: [n x k]; returns a * b^T, shape [m x n].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
// Elementwise natural log; inputs must be strictly positive.
Tensor log(const Tensor& a);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, size_t axis);
// Softmax over the last axis where key_mask[j] == 0 positions receive zero
// weight. scores: [m x n], key_mask: length n.
Tensor masked_softmax(const Tensor& scores,
                      const std::vector<uint8_t>& key_mask);

// Reductions to scalar.
Tensor sum(const Tensor& a);
// 1-d input; log sum exp of all entries.
Tensor logsumexp(const Tensor& a);
// 1-d input; log sum exp of all entries except index `excluded`.
Tensor logsumexp_excluding(const Tensor& a, size_t excluded);

// Row-wise layer normalization with learned gain/bias, x: [m x n].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// table: [V x d], ids in [0, V); gather rows, scatter-add on backward.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

Tensor reshape(const Tensor& a, std::vector<size_t> new_shape);
// 2-d transpose.
Tensor transpose(const Tensor& a);
Tensor slice_cols(const Tensor& a, size_t start, size_t width);
Tensor slice_rows(const Tensor& a, size_t start, size_t rows);
Tensor concat_cols(const std::vector<Tensor>& parts);

// 2-d [m x n] -> row i as a 1-d tensor of length n.
Tensor row(const Tensor& a, size_t i);
// 1-d tensor -> scalar at index i.
Tensor pick(const Tensor& a, size_t i);

}  // namespace ops

// Central finite-difference gradient of f at x, used by gradient tests.
std::vector<double> finite_difference(
    const std::function<double(const Tensor&)>& f, Tensor& x,
    double epsilon = 1e-5);

}  // namespace crfgen
