#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "ov3r/tensor.hpp"

// Reverse-mode automatic differentiation over Tensor values.
//
// Every operation returns a Var that keeps shared ownership of its inputs, so
// the expression itself is the graph. backward() walks it in reverse
// topological order. Leaf gradients accumulate across backward() calls until
// zero_grad(); interior gradients are recomputed on every call.
namespace ov3r::ad {

struct Node {
  Tensor value;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  void accumulate(std::size_t i, double g) {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    grad[i] += g;
  }
  double grad_at(std::size_t i) const { return grad.empty() ? 0.0 : grad[i]; }
};

class Var {
 public:
  Var();
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var parameter(Tensor value) { return Var(std::move(value), true); }
  static Var constant(Tensor value) { return Var(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  const Dims& dims() const { return node_->value.dims(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient with the dims of value(); zeros if nothing flowed here.
  Tensor grad() const;
  void zero_grad() { node_->grad.clear(); }

  /// Replace a leaf's value, e.g. after an optimizer step. Dims must agree.
  void assign(Tensor value);

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Backpropagate from a scalar (single-element) output.
void backward(const Var& output);

// Elementwise and structural ops. Binary elementwise ops require equal dims.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_constant(const Var& a, double c);

/// a: N x M plus a 1 x M row broadcast over every row.
Var add_row(const Var& a, const Var& row);
/// a: N x M times a N x 1 column broadcast over every column.
Var mul_col(const Var& a, const Var& col);
/// a times a 1x1 Var.
Var mul_scalar(const Var& a, const Var& s);
/// a divided by a 1x1 Var.
Var div_scalar(const Var& a, const Var& s);
Var add_scalar(const Var& a, const Var& s);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Dims dims);

Var row_softmax(const Var& x);
/// Softmax down each column.
Var col_softmax(const Var& x);

Var sum(const Var& a);
Var mean(const Var& a);
/// N x M -> 1 x M
Var mean_rows(const Var& a);
/// N x M -> N x 1 Euclidean norms. Gradient at a zero row is taken as zero.
Var row_norm(const Var& a);
/// Each row divided by its Euclidean norm. Zero rows are rejected.
Var normalize_rows(const Var& a);

Var abs(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
Var tanh(const Var& a);
/// log(sigmoid(x)), evaluated without overflow.
Var log_sigmoid(const Var& a);

Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(const Var& a, const std::vector<std::size_t>& rows);
Var row(const Var& a, std::size_t r);

/// Optional learned projections applied to queries, keys and values.
struct AttentionProjections {
  Var query;
  Var key;
  Var value;
};

/// row_softmax(q kv^T / sqrt(d)) kv; with projections the logits use
/// (q Wq)(kv Wk)^T and the values kv Wv.
Var scaled_cross_attention(const Var& q, const Var& kv);
Var scaled_cross_attention(const Var& q, const Var& kv, const AttentionProjections& proj);

}  // namespace ov3r::ad
