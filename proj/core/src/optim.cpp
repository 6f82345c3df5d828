#include "ov3r/optim.hpp"

#include <cmath>

#include "ov3r/errors.hpp"

namespace ov3r {

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw ContractError("learning rate must be non-negative");
}

std::vector<Tensor> Optimizer::step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].dims() != grads[i].dims()) {
      throw ShapeError("optimizer: gradient " + grads[i].shape_string() + " for parameter " +
                       params[i].shape_string());
    }
  }
  if (config_.kind == OptimizerKind::adam) {
    if (first_moment_.empty()) {
      for (const auto& p : params) {
        first_moment_.emplace_back(p.size(), 0.0);
        second_moment_.emplace_back(p.size(), 0.0);
      }
    } else if (first_moment_.size() != params.size()) {
      throw ShapeError("optimizer: parameter count changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (first_moment_[i].size() != params[i].size()) throw ShapeError("optimizer: parameter dims changed");
    }
  }
  ++step_count_;
  const double lr = config_.learning_rate;
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double> p(params[i].vec());
    const auto& g = grads[i].vec();
    if (config_.kind == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    } else {
      const double b1 = config_.beta1, b2 = config_.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
      auto& m = first_moment_[i];
      auto& v = second_moment_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        p[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
    }
    out.emplace_back(params[i].dims(), std::move(p));
  }
  return out;
}

void Optimizer::step(const std::vector<ad::Var>& params) {
  std::vector<Tensor> values, grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (const auto& p : params) {
    values.push_back(p.value());
    grads.push_back(p.grad());
  }
  auto updated = step(values, grads);
  for (std::size_t i = 0; i < params.size(); ++i) params[i].node()->value = std::move(updated[i]);
}

void Optimizer::zero_grad(const std::vector<ad::Var>& params) {
  for (const auto& p : params) p.node()->grad.clear();
}

}  // namespace ov3r
