#include "ov3r/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ov3r/errors.hpp"

namespace ov3r::ad {

Var::Var() : node_(std::make_shared<Node>()) {}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor::zeros(node_->value.dims());
  return Tensor(node_->value.dims(), node_->grad);
}

void Var::assign(Tensor value) {
  if (value.dims() != node_->value.dims()) {
    throw ShapeError("assign: " + value.shape_string() + " into " + node_->value.shape_string());
  }
  node_->value = std::move(value);
}

namespace {

Var make(Tensor value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_string() + " vs " +
                     b.value().shape_string());
  }
}

void require_matrix(const Var& a, const char* op) {
  if (a.dims().size() != 2) throw ShapeError(std::string(op) + " expects a matrix, got " + a.value().shape_string());
}

void require_scalar(const Var& s, const char* op) {
  if (s.value().size() != 1) throw ShapeError(std::string(op) + " expects a 1x1 scalar, got " + s.value().shape_string());
}

template <typename F>
Var unary(const Var& a, F f, std::function<void(Node&)> fn) {
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.value()[i]);
  return make(Tensor(a.dims(), std::move(out)), {a.node()}, std::move(fn));
}

}  // namespace

void backward(const Var& output) {
  if (output.value().size() != 1) {
    throw ContractError("backward needs a scalar output, got " + output.value().shape_string());
  }
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{output.node().get(), 0}};
  seen.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
  }
  output.node()->accumulate(0, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  return make(ov3r::add(a.value(), b.value()), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->accumulate(i, self.grad[i]);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  return make(ov3r::sub(a.value(), b.value()), {a.node(), b.node()}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->requires_grad) pa->accumulate(i, self.grad[i]);
      if (pb->requires_grad) pb->accumulate(i, -self.grad[i]);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  return make(hadamard(a.value(), b.value()), {a.node(), b.node()}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->requires_grad) pa->accumulate(i, self.grad[i] * pb->value[i]);
      if (pb->requires_grad) pb->accumulate(i, self.grad[i] * pa->value[i]);
    }
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  return make(ov3r::scale(a.value(), s), {a.node()}, [s](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->accumulate(i, self.grad[i] * s);
  });
}

Var add_constant(const Var& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->accumulate(i, self.grad[i]);
  });
}

Var add_row(const Var& a, const Var& r) {
  require_matrix(a, "add_row");
  const auto n = a.rows(), m = a.cols();
  if (r.dims() != Dims{1, m}) throw ShapeError("add_row: row must be 1x" + std::to_string(m));
  std::vector<double> out(a.value().vec());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += r.value()[j];
  return make(Tensor({n, m}, std::move(out)), {a.node(), r.node()}, [n, m](Node& self) {
    auto& pa = self.parents[0];
    auto& pr = self.parents[1];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double g = self.grad[i * m + j];
        if (pa->requires_grad) pa->accumulate(i * m + j, g);
        if (pr->requires_grad) pr->accumulate(j, g);
      }
  });
}

Var mul_col(const Var& a, const Var& c) {
  require_matrix(a, "mul_col");
  const auto n = a.rows(), m = a.cols();
  if (c.dims() != Dims{n, 1}) throw ShapeError("mul_col: column must be " + std::to_string(n) + "x1");
  std::vector<double> out(a.value().vec());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] *= c.value()[i];
  return make(Tensor({n, m}, std::move(out)), {a.node(), c.node()}, [n, m](Node& self) {
    auto& pa = self.parents[0];
    auto& pc = self.parents[1];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double g = self.grad[i * m + j];
        if (pa->requires_grad) pa->accumulate(i * m + j, g * pc->value[i]);
        if (pc->requires_grad) pc->accumulate(i, g * pa->value[i * m + j]);
      }
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  require_scalar(s, "mul_scalar");
  return make(ov3r::scale(a.value(), s.value()[0]), {a.node(), s.node()}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& ps = self.parents[1];
    const double sv = ps->value[0];
    double gs = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->requires_grad) pa->accumulate(i, self.grad[i] * sv);
      gs += self.grad[i] * pa->value[i];
    }
    if (ps->requires_grad) ps->accumulate(0, gs);
  });
}

Var div_scalar(const Var& a, const Var& s) {
  require_scalar(s, "div_scalar");
  const double sv = s.value()[0];
  if (sv == 0.0) throw DomainError("div_scalar: division by zero");
  return make(ov3r::scale(a.value(), 1.0 / sv), {a.node(), s.node()}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& ps = self.parents[1];
    const double sv = ps->value[0];
    double gs = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->requires_grad) pa->accumulate(i, self.grad[i] / sv);
      gs -= self.grad[i] * pa->value[i] / (sv * sv);
    }
    if (ps->requires_grad) ps->accumulate(0, gs);
  });
}

Var add_scalar(const Var& a, const Var& s) {
  require_scalar(s, "add_scalar");
  return make(ov3r::add(a.value(), Tensor::filled(a.dims(), s.value()[0])), {a.node(), s.node()}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& ps = self.parents[1];
    double gs = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->requires_grad) pa->accumulate(i, self.grad[i]);
      gs += self.grad[i];
    }
    if (ps->requires_grad) ps->accumulate(0, gs);
  });
}

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  return make(ov3r::matmul(a.value(), b.value()), {a.node(), b.node()}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const auto n = pa->value.rows(), k = pa->value.cols(), m = pb->value.cols();
    const auto& g = self.grad;
    if (pa->requires_grad) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * pb->value[p * m + j];
          pa->accumulate(i * k + p, acc);
        }
    }
    if (pb->requires_grad) {
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < m; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += pa->value[i * k + p] * g[i * m + j];
          pb->accumulate(p * m + j, acc);
        }
    }
  });
}

Var transpose(const Var& a) {
  require_matrix(a, "transpose");
  const auto n = a.rows(), m = a.cols();
  return make(ov3r::transpose(a.value()), {a.node()}, [n, m](Node& self) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) self.parents[0]->accumulate(i * m + j, self.grad[j * n + i]);
  });
}

Var reshape(const Var& a, Dims dims) {
  return make(a.value().reshaped(std::move(dims)), {a.node()}, [](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->accumulate(i, self.grad[i]);
  });
}

Var row_softmax(const Var& x) {
  require_matrix(x, "row_softmax");
  Tensor y = ov3r::row_softmax(x.value());
  return make(y, {x.node()}, [](Node& self) {
    const auto n = self.value.rows(), m = self.value.cols();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += self.grad[i * m + j] * self.value(i, j);
      for (std::size_t j = 0; j < m; ++j)
        self.parents[0]->accumulate(i * m + j, self.value(i, j) * (self.grad[i * m + j] - dot));
    }
  });
}

Var col_softmax(const Var& x) { return transpose(row_softmax(transpose(x))); }

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return make(Tensor::scalar(total), {a.node()}, [](Node& self) {
    const double g = self.grad[0];
    for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) self.parents[0]->accumulate(i, g);
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var mean_rows(const Var& a) {
  require_matrix(a, "mean_rows");
  const auto n = a.rows(), m = a.cols();
  return make(ov3r::mean_rows(a.value()), {a.node()}, [n, m](Node& self) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) self.parents[0]->accumulate(i * m + j, self.grad[j] * inv);
  });
}

Var row_norm(const Var& a) {
  require_matrix(a, "row_norm");
  const auto n = a.rows(), m = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a.value()(i, j) * a.value()(i, j);
    out[i] = std::sqrt(s);
  }
  return make(Tensor({n, 1}, std::move(out)), {a.node()}, [n, m](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double norm = self.value[i];
      if (norm == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) pa->accumulate(i * m + j, self.grad[i] * pa->value[i * m + j] / norm);
    }
  });
}

Var normalize_rows(const Var& a) {
  require_matrix(a, "normalize_rows");
  const auto n = a.rows(), m = a.cols();
  std::vector<double> norms(n, 0.0);
  std::vector<double> out(a.value().vec());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += out[i * m + j] * out[i * m + j];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) throw DomainError("normalize_rows: zero row " + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= norms[i];
  }
  return make(Tensor({n, m}, std::move(out)), {a.node()}, [n, m, norms](Node& self) {
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += self.grad[i * m + j] * self.value(i, j);
      for (std::size_t j = 0; j < m; ++j)
        self.parents[0]->accumulate(i * m + j, (self.grad[i * m + j] - self.value(i, j) * dot) / norms[i]);
    }
  });
}

Var abs(const Var& a) {
  return unary(a, [](double x) { return std::abs(x); }, [](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = pa->value[i];
      const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      pa->accumulate(i, self.grad[i] * sign);
    }
  });
}

Var log(const Var& a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  }
  return unary(a, [](double x) { return std::log(x); }, [](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->accumulate(i, self.grad[i] / pa->value[i]);
  });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->accumulate(i, self.grad[i] * self.value[i]);
  });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      self.parents[0]->accumulate(i, self.grad[i] * (1.0 - y * y));
    }
  });
}

Var log_sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](Node& self) {
        auto& pa = self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double x = pa->value[i];
          // d/dx log sigmoid(x) = sigmoid(-x)
          const double s = x >= 0.0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
          pa->accumulate(i, self.grad[i] * s);
        }
      });
}

Var concat_cols(const Var& a, const Var& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  const auto n = a.rows(), ma = a.cols(), mb = b.cols();
  if (b.rows() != n) throw ShapeError("concat_cols: row counts differ");
  std::vector<double> out(n * (ma + mb));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ma; ++j) out[i * (ma + mb) + j] = a.value()(i, j);
    for (std::size_t j = 0; j < mb; ++j) out[i * (ma + mb) + ma + j] = b.value()(i, j);
  }
  return make(Tensor({n, ma + mb}, std::move(out)), {a.node(), b.node()}, [n, ma, mb](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      if (pa->requires_grad)
        for (std::size_t j = 0; j < ma; ++j) pa->accumulate(i * ma + j, self.grad[i * (ma + mb) + j]);
      if (pb->requires_grad)
        for (std::size_t j = 0; j < mb; ++j) pb->accumulate(i * mb + j, self.grad[i * (ma + mb) + ma + j]);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const auto m = parts.front().cols();
  std::vector<double> out;
  std::vector<std::shared_ptr<Node>> parents;
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != m) throw ShapeError("concat_rows: column counts differ");
    out.insert(out.end(), p.value().vec().begin(), p.value().vec().end());
    parents.push_back(p.node());
    n += p.rows();
  }
  return make(Tensor({n, m}, std::move(out)), std::move(parents), [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const auto len = p->value.size();
      if (p->requires_grad)
        for (std::size_t i = 0; i < len; ++i) p->accumulate(i, self.grad[offset + i]);
      offset += len;
    }
  });
}

Var gather_rows(const Var& a, const std::vector<std::size_t>& rows) {
  require_matrix(a, "gather_rows");
  if (rows.empty()) throw ShapeError("gather_rows: empty row selection");
  const auto n = a.rows(), m = a.cols();
  std::vector<double> out;
  out.reserve(rows.size() * m);
  for (auto r : rows) {
    if (r >= n) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range");
    for (std::size_t j = 0; j < m; ++j) out.push_back(a.value()(r, j));
  }
  return make(Tensor({rows.size(), m}, std::move(out)), {a.node()}, [rows, m](Node& self) {
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (std::size_t j = 0; j < m; ++j) self.parents[0]->accumulate(rows[k] * m + j, self.grad[k * m + j]);
  });
}

Var row(const Var& a, std::size_t r) { return gather_rows(a, {r}); }

Var scaled_cross_attention(const Var& q, const Var& kv) {
  require_matrix(q, "cross attention");
  require_matrix(kv, "cross attention");
  if (q.cols() != kv.cols()) {
    throw ShapeError("cross attention: feature widths differ " + q.value().shape_string() + " vs " +
                     kv.value().shape_string());
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return matmul(row_softmax(scale(matmul(q, transpose(kv)), inv_sqrt_d)), kv);
}

Var scaled_cross_attention(const Var& q, const Var& kv, const AttentionProjections& proj) {
  const Var qp = matmul(q, proj.query);
  const Var kp = matmul(kv, proj.key);
  const Var vp = matmul(kv, proj.value);
  if (qp.cols() != kp.cols()) throw ShapeError("cross attention: projected query/key widths differ");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qp.cols()));
  return matmul(row_softmax(scale(matmul(qp, transpose(kp)), inv_sqrt_d)), vp);
}

}  // namespace ov3r::ad
