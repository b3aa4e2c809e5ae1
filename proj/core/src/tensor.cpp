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

#include "crfgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace crfgen {

namespace {

size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

thread_local GradientTape* g_active_tape = nullptr;

// c[m x n] += a[m x k] * b[k x n]
void mm_nn(const double* __restrict__ a, const double* __restrict__ b,
           double* __restrict__ c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void mm_nt(const double* __restrict__ a, const double* __restrict__ b,
           double* __restrict__ c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

// c[m x n] += a[p x m]^T * b[p x n]
void mm_tn(const double* __restrict__ a, const double* __restrict__ b,
           double* __restrict__ c, size_t p, size_t m, size_t n) {
  for (size_t r = 0; r < p; ++r) {
    const double* arow = a + r * m;
    const double* brow = b + r * n;
    for (size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

void check_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-d tensor, got " +
                     shape_to_string(a.shape()));
  }
}

}  // namespace

Tensor Tensor::zeros(std::vector<size_t> shape) {
  auto st = std::make_shared<detail::TensorState>();
  st->data.assign(shape_numel(shape), 0.0);
  st->shape = std::move(shape);
  return Tensor(std::move(st));
}

Tensor Tensor::full(std::vector<size_t> shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.st_->data.begin(), t.st_->data.end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<size_t> shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("from_data: shape " + shape_to_string(shape) +
                     " does not hold " + std::to_string(data.size()) +
                     " values");
  }
  auto st = std::make_shared<detail::TensorState>();
  st->shape = std::move(shape);
  st->data = std::move(data);
  return Tensor(std::move(st));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::uniform(std::vector<size_t> shape, double lo, double hi,
                       Rng& rng) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.st_->data) v = rng.uniform(lo, hi);
  return t;
}

bool Tensor::is_scalar() const { return st_ && st_->data.size() == 1; }

double Tensor::item() const {
  if (!is_scalar()) {
    throw ContractError("item: tensor of shape " + shape_to_string(shape()) +
                        " is not a scalar");
  }
  return st_->data[0];
}

double Tensor::at(size_t i, size_t j) const {
  return st_->data[i * st_->shape[1] + j];
}

void Tensor::set(size_t i, size_t j, double v) {
  st_->data[i * st_->shape[1] + j] = v;
}

double* Tensor::grad() {
  if (st_->grad.size() != st_->data.size()) {
    st_->grad.assign(st_->data.size(), 0.0);
  }
  return st_->grad.data();
}

const std::vector<double>& Tensor::grad_values() {
  grad();
  return st_->grad;
}

void Tensor::zero_grad() {
  st_->grad.assign(st_->data.size(), 0.0);
}

Tensor Tensor::clone() const {
  auto st = std::make_shared<detail::TensorState>();
  st->shape = st_->shape;
  st->data = st_->data;
  st->requires_grad = st_->requires_grad;
  return Tensor(std::move(st));
}

GradientTape::GradientTape() {
  if (g_active_tape != nullptr) {
    throw ContractError("GradientTape: a tape is already active on this thread");
  }
  g_active_tape = this;
}

GradientTape::~GradientTape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

GradientTape* GradientTape::active() { return g_active_tape; }

bool GradientTape::should_record(
    std::initializer_list<const Tensor*> inputs) const {
  for (const Tensor* t : inputs) {
    if (!t->defined()) continue;
    const detail::TensorState* st = t->state();
    if (st->requires_grad) return true;
    if (st->tape == this && st->tape_node >= 0) return true;
  }
  return false;
}

void GradientTape::record(const Tensor& output, std::vector<Tensor> inputs,
                          BackwardFn fn) {
  Node node;
  node.out = output.shared_state();
  node.inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) node.inputs.push_back(t.shared_state());
  node.fn = std::move(fn);
  node.out->tape = this;
  node.out->tape_node = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
}

double* GradientTape::grad_buffer(const detail::TensorState* st) {
  auto it = grads_.find(st);
  if (it == grads_.end()) {
    it = grads_.emplace(st, std::vector<double>(st->data.size(), 0.0)).first;
  }
  return it->second.data();
}

const double* GradientTape::find_grad(const detail::TensorState* st) const {
  auto it = grads_.find(st);
  return it == grads_.end() ? nullptr : it->second.data();
}

void GradientTape::run_reverse(const Tensor& loss) {
  if (consumed_) {
    throw ContractError("backward: tape already consumed");
  }
  consumed_ = true;
  if (!loss.is_scalar()) {
    throw ContractError("backward: loss of shape " +
                        shape_to_string(loss.shape()) + " is not a scalar");
  }
  grads_.clear();
  grads_[loss.state()] = {1.0};
  // Reverse recording order is a valid topological order: parents of every
  // node were recorded before it. Each node is visited exactly once.
  for (size_t i = nodes_.size(); i-- > 0;) {
    const Node& node = nodes_[i];
    auto it = grads_.find(node.out.get());
    if (it == grads_.end()) continue;  // does not contribute to the loss
    node.fn(it->second.data());
  }
}

void GradientTape::backward(const Tensor& loss) {
  run_reverse(loss);
  for (auto& [st, buf] : grads_) {
    auto* state = const_cast<detail::TensorState*>(st);
    if (!state->requires_grad) continue;
    if (state->grad.size() != state->data.size()) {
      state->grad.assign(state->data.size(), 0.0);
    }
    for (size_t i = 0; i < buf.size(); ++i) state->grad[i] += buf[i];
  }
}

GradMap GradientTape::backward_collect(const Tensor& loss) {
  run_reverse(loss);
  GradMap out;
  for (auto& [st, buf] : grads_) {
    if (st->requires_grad) {
      out.emplace(const_cast<detail::TensorState*>(st), std::move(buf));
    }
  }
  grads_.clear();
  return out;
}

void tape_record(const Tensor& output, std::vector<Tensor> inputs,
                 GradientTape::BackwardFn fn) {
  GradientTape* tape = GradientTape::active();
  if (tape == nullptr) return;
  tape->record(output, std::move(inputs), std::move(fn));
}

namespace ops {

namespace {

// Shared recording guard: returns the active tape when any input is tracked.
GradientTape* tracking_tape(std::initializer_list<const Tensor*> inputs) {
  GradientTape* tape = GradientTape::active();
  if (tape && tape->should_record(inputs)) return tape;
  return nullptr;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (size_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
  if (GradientTape* tape = tracking_tape({&a, &b})) {
    auto sa = a.shared_state();
    auto sb = b.shared_state();
    tape->record(out, {a, b}, [tape, sa, sb](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      double* db = tape->grad_buffer(sb.get());
      for (size_t i = 0; i < sa->data.size(); ++i) {
        da[i] += g[i];
        db[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (size_t i = 0; i < a.size(); ++i) po[i] = pa[i] - pb[i];
  if (GradientTape* tape = tracking_tape({&a, &b})) {
    auto sa = a.shared_state();
    auto sb = b.shared_state();
    tape->record(out, {a, b}, [tape, sa, sb](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      double* db = tape->grad_buffer(sb.get());
      for (size_t i = 0; i < sa->data.size(); ++i) {
        da[i] += g[i];
        db[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (size_t i = 0; i < a.size(); ++i) po[i] = pa[i] * pb[i];
  if (GradientTape* tape = tracking_tape({&a, &b})) {
    auto sa = a.shared_state();
    auto sb = b.shared_state();
    tape->record(out, {a, b}, [tape, sa, sb](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      double* db = tape->grad_buffer(sb.get());
      for (size_t i = 0; i < sa->data.size(); ++i) {
        da[i] += g[i] * sb->data[i];
        db[i] += g[i] * sa->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (size_t i = 0; i < a.size(); ++i) po[i] = pa[i] * c;
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa, c](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t i = 0; i < sa->data.size(); ++i) da[i] += g[i] * c;
    });
  }
  return out;
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& bias) {
  check_rank2(a, "add_row_broadcast");
  if (bias.rank() != 1 || bias.dim(0) != a.dim(1)) {
    throw ShapeError("add_row_broadcast: bias " + shape_to_string(bias.shape()) +
                     " does not match " + shape_to_string(a.shape()));
  }
  const size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) po[i * n + j] = pa[i * n + j] + pb[j];
  if (GradientTape* tape = tracking_tape({&a, &bias})) {
    auto sa = a.shared_state();
    auto sb = bias.shared_state();
    tape->record(out, {a, bias}, [tape, sa, sb, m, n](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      double* db = tape->grad_buffer(sb.get());
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) {
          da[i * n + j] += g[i * n + j];
          db[j] += g[i * n + j];
        }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  mm_nn(a.data(), b.data(), out.data(), m, k, n);
  if (GradientTape* tape = tracking_tape({&a, &b})) {
    auto sa = a.shared_state();
    auto sb = b.shared_state();
    tape->record(out, {a, b}, [tape, sa, sb, m, k, n](const double* g) {
      // dA = dC * B^T, dB = A^T * dC
      mm_nt(g, sb->data.data(), tape->grad_buffer(sa.get()), m, n, k);
      mm_tn(sa->data.data(), g, tape->grad_buffer(sb.get()), m, k, n);
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul_nt");
  check_rank2(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: inner dimensions disagree, " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  const size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out = Tensor::zeros({m, n});
  mm_nt(a.data(), b.data(), out.data(), m, k, n);
  if (GradientTape* tape = tracking_tape({&a, &b})) {
    auto sa = a.shared_state();
    auto sb = b.shared_state();
    tape->record(out, {a, b}, [tape, sa, sb, m, k, n](const double* g) {
      // dA = dC * B, dB = dC^T * A
      mm_nn(g, sb->data.data(), tape->grad_buffer(sa.get()), m, n, k);
      mm_tn(g, sa->data.data(), tape->grad_buffer(sb.get()), m, n, k);
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (size_t i = 0; i < a.size(); ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t i = 0; i < sa->data.size(); ++i) {
        if (sa->data[i] > 0.0) da[i] += g[i];
      }
    });
  }
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (size_t i = 0; i < a.size(); ++i) {
    if (pa[i] <= 0.0) {
      throw ContractError("log: non-positive input " + std::to_string(pa[i]));
    }
    po[i] = std::log(pa[i]);
  }
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t i = 0; i < sa->data.size(); ++i) da[i] += g[i] / sa->data[i];
    });
  }
  return out;
}

namespace {

// Softmax along one axis expressed as (outer, n, inner) strides.
void softmax_forward(const double* x, double* y, size_t outer, size_t n,
                     size_t inner) {
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      const double* xs = x + o * n * inner + in;
      double* ys = y + o * n * inner + in;
      double mx = xs[0];
      for (size_t i = 1; i < n; ++i) mx = std::max(mx, xs[i * inner]);
      double denom = 0.0;
      for (size_t i = 0; i < n; ++i) {
        double e = std::exp(xs[i * inner] - mx);
        ys[i * inner] = e;
        denom += e;
      }
      for (size_t i = 0; i < n; ++i) ys[i * inner] /= denom;
    }
  }
}

void softmax_backward(const double* y, const double* g, double* dx,
                      size_t outer, size_t n, size_t inner) {
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      const double* ys = y + o * n * inner + in;
      const double* gs = g + o * n * inner + in;
      double* ds = dx + o * n * inner + in;
      double dot = 0.0;
      for (size_t i = 0; i < n; ++i) dot += ys[i * inner] * gs[i * inner];
      for (size_t i = 0; i < n; ++i) {
        ds[i * inner] += ys[i * inner] * (gs[i * inner] - dot);
      }
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& a, size_t axis) {
  if (axis >= a.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) +
                     " out of range for " + shape_to_string(a.shape()));
  }
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const size_t n = a.dim(axis);
  Tensor out = Tensor::zeros(a.shape());
  softmax_forward(a.data(), out.data(), outer, n, inner);
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    auto so = out.shared_state();
    tape->record(out, {a}, [tape, sa, so, outer, n, inner](const double* g) {
      softmax_backward(so->data.data(), g, tape->grad_buffer(sa.get()), outer,
                       n, inner);
    });
  }
  return out;
}

Tensor masked_softmax(const Tensor& scores,
                      const std::vector<uint8_t>& key_mask) {
  check_rank2(scores, "masked_softmax");
  const size_t m = scores.dim(0), n = scores.dim(1);
  if (key_mask.size() != n) {
    throw ShapeError("masked_softmax: mask length " +
                     std::to_string(key_mask.size()) + " vs scores " +
                     shape_to_string(scores.shape()));
  }
  bool any = false;
  for (uint8_t b : key_mask) any = any || (b != 0);
  if (!any) throw ContractError("masked_softmax: every key is masked");

  Tensor out = Tensor::zeros({m, n});
  const double* x = scores.data();
  double* y = out.data();
  for (size_t i = 0; i < m; ++i) {
    const double* xs = x + i * n;
    double* ys = y + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < n; ++j) {
      if (key_mask[j]) mx = std::max(mx, xs[j]);
    }
    double denom = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (key_mask[j]) {
        ys[j] = std::exp(xs[j] - mx);
        denom += ys[j];
      } else {
        ys[j] = 0.0;
      }
    }
    for (size_t j = 0; j < n; ++j) ys[j] /= denom;
  }
  if (GradientTape* tape = tracking_tape({&scores})) {
    auto sa = scores.shared_state();
    auto so = out.shared_state();
    tape->record(out, {scores}, [tape, sa, so, m, n](const double* g) {
      // Masked entries have y == 0, so the dense formula leaves them at 0.
      softmax_backward(so->data.data(), g, tape->grad_buffer(sa.get()), m, n,
                       1);
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  const double* pa = a.data();
  for (size_t i = 0; i < a.size(); ++i) acc += pa[i];
  Tensor out = Tensor::scalar(acc);
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t i = 0; i < sa->data.size(); ++i) da[i] += g[0];
    });
  }
  return out;
}

Tensor logsumexp(const Tensor& a) {
  if (a.rank() != 1 || a.size() == 0) {
    throw ShapeError("logsumexp: expected non-empty 1-d tensor, got " +
                     shape_to_string(a.shape()));
  }
  const double* x = a.data();
  const size_t n = a.size();
  double mx = x[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
  Tensor out = Tensor::scalar(mx + std::log(s));
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    auto so = out.shared_state();
    tape->record(out, {a}, [tape, sa, so](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      const double lse = so->data[0];
      for (size_t i = 0; i < sa->data.size(); ++i) {
        da[i] += g[0] * std::exp(sa->data[i] - lse);
      }
    });
  }
  return out;
}

Tensor logsumexp_excluding(const Tensor& a, size_t excluded) {
  if (a.rank() != 1 || a.size() < 2) {
    throw ShapeError("logsumexp_excluding: need >= 2 entries, got " +
                     shape_to_string(a.shape()));
  }
  if (excluded >= a.size()) {
    throw ContractError("logsumexp_excluding: index " +
                        std::to_string(excluded) + " out of range");
  }
  const double* x = a.data();
  const size_t n = a.size();
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    if (i != excluded) mx = std::max(mx, x[i]);
  }
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (i != excluded) s += std::exp(x[i] - mx);
  }
  Tensor out = Tensor::scalar(mx + std::log(s));
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    auto so = out.shared_state();
    tape->record(out, {a}, [tape, sa, so, excluded](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      const double lse = so->data[0];
      for (size_t i = 0; i < sa->data.size(); ++i) {
        if (i != excluded) da[i] += g[0] * std::exp(sa->data[i] - lse);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  check_rank2(x, "layer_norm");
  const size_t m = x.dim(0), n = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != n || bias.rank() != 1 ||
      bias.dim(0) != n) {
    throw ShapeError("layer_norm: gain/bias must be [n] for x " +
                     shape_to_string(x.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  const double* px = x.data();
  const double* pg = gain.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (size_t i = 0; i < m; ++i) {
    const double* xs = px + i * n;
    double* ys = po + i * n;
    double mu = 0.0;
    for (size_t j = 0; j < n; ++j) mu += xs[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (size_t j = 0; j < n; ++j) var += (xs[j] - mu) * (xs[j] - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < n; ++j) {
      ys[j] = (xs[j] - mu) * inv * pg[j] + pb[j];
    }
  }
  if (GradientTape* tape = tracking_tape({&x, &gain, &bias})) {
    auto sx = x.shared_state();
    auto sg = gain.shared_state();
    auto sb = bias.shared_state();
    tape->record(out, {x, gain, bias},
                 [tape, sx, sg, sb, m, n, eps](const double* g) {
      double* dx = tape->grad_buffer(sx.get());
      double* dg = tape->grad_buffer(sg.get());
      double* db = tape->grad_buffer(sb.get());
      const double* px = sx->data.data();
      const double* pg = sg->data.data();
      const double dn = static_cast<double>(n);
      std::vector<double> xhat(n), dxhat(n);
      for (size_t i = 0; i < m; ++i) {
        const double* xs = px + i * n;
        const double* gs = g + i * n;
        double mu = 0.0;
        for (size_t j = 0; j < n; ++j) mu += xs[j];
        mu /= dn;
        double var = 0.0;
        for (size_t j = 0; j < n; ++j) var += (xs[j] - mu) * (xs[j] - mu);
        var /= dn;
        const double inv = 1.0 / std::sqrt(var + eps);
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (size_t j = 0; j < n; ++j) {
          xhat[j] = (xs[j] - mu) * inv;
          dxhat[j] = gs[j] * pg[j];
          sum_dxhat += dxhat[j];
          sum_dxhat_xhat += dxhat[j] * xhat[j];
          dg[j] += gs[j] * xhat[j];
          db[j] += gs[j];
        }
        for (size_t j = 0; j < n; ++j) {
          dx[i * n + j] +=
              inv * (dxhat[j] - sum_dxhat / dn - xhat[j] * sum_dxhat_xhat / dn);
        }
      }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  check_rank2(table, "embedding_lookup");
  const size_t v = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= v) {
      throw VocabError("embedding_lookup: id " + std::to_string(id) +
                       " outside table of " + std::to_string(v) + " rows");
    }
  }
  const size_t len = ids.size();
  Tensor out = Tensor::zeros({len, d});
  const double* pt = table.data();
  double* po = out.data();
  for (size_t i = 0; i < len; ++i) {
    std::memcpy(po + i * d, pt + static_cast<size_t>(ids[i]) * d,
                d * sizeof(double));
  }
  if (GradientTape* tape = tracking_tape({&table})) {
    auto st = table.shared_state();
    std::vector<int> idv(ids.begin(), ids.end());
    tape->record(out, {table}, [tape, st, idv, d](const double* g) {
      double* dt = tape->grad_buffer(st.get());
      for (size_t i = 0; i < idv.size(); ++i) {
        double* row = dt + static_cast<size_t>(idv[i]) * d;
        const double* gs = g + i * d;
        for (size_t j = 0; j < d; ++j) row[j] += gs[j];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, std::vector<size_t> new_shape) {
  size_t n = 1;
  for (size_t d : new_shape) n *= d;
  if (n != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) +
                     " as " + shape_to_string(new_shape));
  }
  Tensor out = Tensor::from_data(std::move(new_shape), a.values());
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t i = 0; i < sa->data.size(); ++i) da[i] += g[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check_rank2(a, "transpose");
  const size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  const double* pa = a.data();
  double* po = out.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa, m, n](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, size_t start, size_t width) {
  check_rank2(a, "slice_cols");
  const size_t m = a.dim(0), n = a.dim(1);
  if (start + width > n) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + width) + ") out of range for " +
                     shape_to_string(a.shape()));
  }
  Tensor out = Tensor::zeros({m, width});
  const double* pa = a.data();
  double* po = out.data();
  for (size_t i = 0; i < m; ++i) {
    std::memcpy(po + i * width, pa + i * n + start, width * sizeof(double));
  }
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa, start, width, m, n](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < width; ++j)
          da[i * n + start + j] += g[i * width + j];
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, size_t start, size_t rows) {
  check_rank2(a, "slice_rows");
  const size_t m = a.dim(0), n = a.dim(1);
  if (start + rows > m) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + rows) + ") out of range for " +
                     shape_to_string(a.shape()));
  }
  Tensor out = Tensor::zeros({rows, n});
  std::memcpy(out.data(), a.data() + start * n, rows * n * sizeof(double));
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa, start, rows, n](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t i = 0; i < rows * n; ++i) da[start * n + i] += g[i];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty part list");
  const size_t m = parts[0].dim(0);
  size_t total = 0;
  for (const Tensor& p : parts) {
    check_rank2(p, "concat_cols");
    if (p.dim(0) != m) {
      throw ShapeError("concat_cols: row mismatch " +
                       shape_to_string(parts[0].shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    total += p.dim(1);
  }
  Tensor out = Tensor::zeros({m, total});
  double* po = out.data();
  size_t col = 0;
  for (const Tensor& p : parts) {
    const size_t w = p.dim(1);
    const double* pp = p.data();
    for (size_t i = 0; i < m; ++i) {
      std::memcpy(po + i * total + col, pp + i * w, w * sizeof(double));
    }
    col += w;
  }
  bool track = false;
  GradientTape* tape = GradientTape::active();
  if (tape) {
    for (const Tensor& p : parts) track = track || tape->should_record({&p});
  }
  if (tape && track) {
    std::vector<std::shared_ptr<detail::TensorState>> states;
    for (const Tensor& p : parts) states.push_back(p.shared_state());
    tape->record(out, parts, [tape, states, m, total](const double* g) {
      size_t col = 0;
      for (const auto& st : states) {
        const size_t w = st->data.size() / m;
        double* dp = tape->grad_buffer(st.get());
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < w; ++j) dp[i * w + j] += g[i * total + col + j];
        col += w;
      }
    });
  }
  return out;
}

Tensor row(const Tensor& a, size_t i) {
  check_rank2(a, "row");
  const size_t m = a.dim(0), n = a.dim(1);
  if (i >= m) {
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                     shape_to_string(a.shape()));
  }
  Tensor out = Tensor::zeros({n});
  std::memcpy(out.data(), a.data() + i * n, n * sizeof(double));
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa, i, n](const double* g) {
      double* da = tape->grad_buffer(sa.get());
      for (size_t j = 0; j < n; ++j) da[i * n + j] += g[j];
    });
  }
  return out;
}

Tensor pick(const Tensor& a, size_t i) {
  if (a.rank() != 1 || i >= a.size()) {
    throw ShapeError("pick: index " + std::to_string(i) +
                     " invalid for tensor " + shape_to_string(a.shape()));
  }
  Tensor out = Tensor::scalar(a.data()[i]);
  if (GradientTape* tape = tracking_tape({&a})) {
    auto sa = a.shared_state();
    tape->record(out, {a}, [tape, sa, i](const double* g) {
      tape->grad_buffer(sa.get())[i] += g[0];
    });
  }
  return out;
}

}  // namespace ops

std::vector<double> finite_difference(
    const std::function<double(const Tensor&)>& f, Tensor& x, double epsilon) {
  std::vector<double> grad(x.size());
  double* px = x.data();
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = px[i];
    px[i] = saved + epsilon;
    const double fp = f(x);
    px[i] = saved - epsilon;
    const double fm = f(x);
    px[i] = saved;
    grad[i] = (fp - fm) / (2.0 * epsilon);
  }
  return grad;
}

}  // namespace crfgen
