#include "ov3r/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ov3r/errors.hpp"

namespace ov3r {

std::size_t product(const Dims& dims) {
  std::size_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
      throw ShapeError("tensor extent product overflows: " + ov3r::shape_string(dims));
    }
    n *= d;
  }
  return n;
}

std::string shape_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : dims_{1, 1}, data_{0.0} {}

Tensor::Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  if (dims_.empty()) throw ShapeError("tensor needs at least one dimension");
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("tensor extents must be positive: " + ov3r::shape_string(dims_));
  }
  if (product(dims_) != data_.size()) {
    throw ShapeError("tensor payload of " + std::to_string(data_.size()) + " values does not match " +
                     ov3r::shape_string(dims_));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor " + ov3r::shape_string(dims_));
  }
}

Tensor Tensor::zeros(Dims dims) { return filled(std::move(dims), 0.0); }

Tensor Tensor::filled(Dims dims, double value) {
  const auto n = product(dims);
  return Tensor(std::move(dims), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("from_rows needs at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("ragged rows in from_rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::row_vector(std::vector<double> data) {
  const auto n = data.size();
  return Tensor({1, n}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (dims_.size() != 2) throw ShapeError("expected a matrix, got " + ov3r::shape_string(dims_));
  return dims_[0];
}

std::size_t Tensor::cols() const {
  if (dims_.size() != 2) throw ShapeError("expected a matrix, got " + ov3r::shape_string(dims_));
  return dims_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on non-scalar tensor " + ov3r::shape_string(dims_));
  return data_[0];
}

Tensor Tensor::reshaped(Dims dims) const { return Tensor(std::move(dims), data_); }

std::string Tensor::shape_string() const { return ov3r::shape_string(dims_); }

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same(a, b, op);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return Tensor(a.dims(), std::move(out));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape_string() + " * " + b.shape_string());
  }
  std::vector<double> out(n * m, 0.0);
  const auto& av = a.vec();
  const auto& bv = b.vec();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * bv[p * m + j];
    }
  }
  return Tensor({n, m}, std::move(out));
}

Tensor transpose(const Tensor& a) {
  const auto n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a(i, j);
  return Tensor({m, n}, std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return zip(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.vec());
  for (auto& v : out) v *= s;
  return Tensor(a.dims(), std::move(out));
}

Tensor mean_rows(const Tensor& a) {
  const auto n = a.rows(), m = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += a(i, j);
  for (auto& v : out) v /= static_cast<double>(n);
  return Tensor({1, m}, std::move(out));
}

Tensor row_softmax(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("row_softmax expects a matrix, got " + x.shape_string());
  const auto n = x.rows(), m = x.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = std::exp(x(i, j) - mx);
      total += out[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= total;
  }
  return Tensor({n, m}, std::move(out));
}

Tensor scaled_cross_attention(const Tensor& q, const Tensor& kv) {
  if (q.rank() != 2 || kv.rank() != 2 || q.cols() != kv.cols()) {
    throw ShapeError("cross attention: feature widths differ " + q.shape_string() + " vs " + kv.shape_string());
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return matmul(row_softmax(scale(matmul(q, transpose(kv)), inv_sqrt_d)), kv);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ov3r
