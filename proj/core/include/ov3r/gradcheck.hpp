#pragma once

#include <cstddef>
#include <functional>

#include "ov3r/autodiff.hpp"
#include "ov3r/tensor.hpp"

namespace ov3r {

struct GradCheckReport {
  bool passed = false;
  /// max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double tolerance = 0.0;
};

/// Compares the reverse-mode gradient of f at x with central differences.
/// f must return a scalar Var built from its argument.
GradCheckReport finite_diff_check(const std::function<ad::Var(const ad::Var&)>& f, const Tensor& x, double tol,
                                  double h = 1e-6);

/// Same comparison against a caller-supplied analytic gradient.
GradCheckReport finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& analytic_grad,
                                  const Tensor& x, double tol, double h = 1e-6);

}  // namespace ov3r
