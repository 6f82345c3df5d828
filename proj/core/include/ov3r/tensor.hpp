#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ov3r {

using Dims = std::vector<std::size_t>;

/// Dense row-major tensor of doubles. Immutable once built: every constructor
/// checks that the extents are positive, that the payload matches them, and
/// that all values are finite.
class Tensor {
 public:
  /// A 1x1 zero.
  Tensor();
  Tensor(Dims dims, std::vector<double> data);

  static Tensor zeros(Dims dims);
  static Tensor filled(Dims dims, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row_vector(std::vector<double> data);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  /// 2D accessors; rows()/cols() throw ShapeError on non-matrices.
  std::size_t rows() const;
  std::size_t cols() const;
  double operator()(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  Tensor reshaped(Dims dims) const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

std::string shape_string(const Dims& dims);
std::size_t product(const Dims& dims);

// Plain forward kernels. The differentiable versions in autodiff.hpp call
// these for their values.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor mean_rows(const Tensor& a);

/// Softmax over each row, computed after subtracting the row max.
Tensor row_softmax(const Tensor& x);

/// row_softmax(q kv^T / sqrt(d)) kv for q: Tq x d, kv: Tk x d.
Tensor scaled_cross_attention(const Tensor& q, const Tensor& kv);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace ov3r
