#pragma once

#include <cstdint>
#include <vector>

#include "ov3r/autodiff.hpp"
#include "ov3r/tensor.hpp"

namespace ov3r {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First-order optimizer state. Adam moments are created lazily on the first
/// step and keep the dims of their parameters from then on.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Pure update: returns the stepped parameters. dims of params and grads
  /// must agree element-wise.
  std::vector<Tensor> step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  /// Steps leaf Vars in place from their accumulated gradients.
  void step(const std::vector<ad::Var>& params);
  static void zero_grad(const std::vector<ad::Var>& params);

  const OptimizerConfig& config() const noexcept { return config_; }
  std::uint64_t steps_taken() const noexcept { return step_count_; }

 private:
  OptimizerConfig config_;
  std::uint64_t step_count_ = 0;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
};

}  // namespace ov3r
