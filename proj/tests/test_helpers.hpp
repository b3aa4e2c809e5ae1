// Shared test utilities: relative-error comparison and the central
// finite-difference gradient checker used throughout the suite.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "crfgen/tensor.hpp"

namespace crfgen::testing {

inline double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / scale;
}

// Worst relative error between the tape gradient of `fn` w.r.t. x and the
// central finite-difference estimate. `fn` must rebuild the loss from the
// current contents of x on every call.
inline double max_grad_rel_err(Tensor& x, const std::function<Tensor()>& fn,
                               double epsilon = 1e-5) {
  x.set_requires_grad(true);
  x.zero_grad();
  {
    GradientTape tape;
    Tensor loss = fn();
    tape.backward(loss);
  }
  std::vector<double> analytic(x.grad(), x.grad() + x.size());
  auto value = [&fn](const Tensor&) { return fn().item(); };
  std::vector<double> numeric = finite_difference(value, x, epsilon);
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, rel_err(analytic[i], numeric[i]));
  }
  return worst;
}

}  // namespace crfgen::testing
