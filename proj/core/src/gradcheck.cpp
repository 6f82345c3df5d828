#include "ov3r/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ov3r/errors.hpp"

namespace ov3r {

GradCheckReport finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& analytic_grad,
                                  const Tensor& x, double tol, double h) {
  if (analytic_grad.dims() != x.dims()) throw ShapeError("finite_diff_check: gradient dims differ from x");
  GradCheckReport report;
  report.tolerance = tol;
  std::vector<double> probe(x.vec());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double x0 = probe[i];
    probe[i] = x0 + h;
    const double fp = f(Tensor(x.dims(), probe));
    probe[i] = x0 - h;
    const double fm = f(Tensor(x.dims(), probe));
    probe[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_check: non-finite evaluation at coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = analytic_grad[i];
    const double rel = std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
    if (rel > report.max_rel_error || i == 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      if (rel >= report.max_rel_error) report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport finite_diff_check(const std::function<ad::Var(const ad::Var&)>& f, const Tensor& x, double tol,
                                  double h) {
  ad::Var input = ad::Var::parameter(x);
  ad::Var out = f(input);
  ad::backward(out);
  const Tensor analytic = input.grad();
  auto value = [&f](const Tensor& t) { return f(ad::Var::constant(t)).value().item(); };
  return finite_diff_check(value, analytic, x, tol, h);
}

}  // namespace ov3r
