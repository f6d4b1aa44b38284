#include "partedit/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace partedit::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> g_creation_counter{0};

using NodePtr = std::shared_ptr<detail::Node>;

ConstMapMat view(const detail::Node& n) {
  return {n.value.data(), static_cast<Eigen::Index>(n.shape.rows),
          static_cast<Eigen::Index>(n.shape.cols)};
}

ConstMapMat grad_view(const detail::Node& n) {
  return {n.grad.data(), static_cast<Eigen::Index>(n.shape.rows),
          static_cast<Eigen::Index>(n.shape.cols)};
}

MapMat accum_view(detail::Node& n) {
  auto& g = n.grad_buffer();
  return {g.data(), static_cast<Eigen::Index>(n.shape.rows),
          static_cast<Eigen::Index>(n.shape.cols)};
}

Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(value);
  node->order = g_creation_counter.fetch_add(1, std::memory_order_relaxed);
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->leaf = false;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

const detail::Node& checked(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor operand");
  }
  return *t.node();
}

enum class Broadcast { same, scalar, row, column };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::same;
  if (b.rows == 1 && b.cols == 1) return Broadcast::scalar;
  if (b.rows == 1 && b.cols == a.cols) return Broadcast::row;
  if (b.cols == 1 && b.rows == a.rows) return Broadcast::column;
  throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(b) + " onto " +
                       to_string(a));
}

std::size_t broadcast_index(Broadcast kind, std::size_t r, std::size_t c, std::size_t cols) {
  switch (kind) {
    case Broadcast::same:
      return r * cols + c;
    case Broadcast::scalar:
      return 0;
    case Broadcast::row:
      return c;
    case Broadcast::column:
      return r;
  }
  return 0;
}

template <class Fn>
Tensor binary_broadcast(const Tensor& a, const Tensor& b, const char* op, Fn fn) {
  const auto& na = checked(a, op);
  const auto& nb = checked(b, op);
  const Broadcast kind = broadcast_kind(na.shape, nb.shape, op);
  const std::size_t rows = na.shape.rows;
  const std::size_t cols = na.shape.cols;
  std::vector<double> out(na.shape.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = fn(na.value[r * cols + c], nb.value[broadcast_index(kind, r, c, cols)]);
    }
  }
  return make_result(na.shape, std::move(out), {a.node(), b.node()}, nullptr);
}

template <class ValueFn, class DerivFn>
Tensor unary(const Tensor& a, const char* op, ValueFn value_fn, DerivFn deriv_fn) {
  const auto& na = checked(a, op);
  std::vector<double> out(na.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value_fn(na.value[i]);
  return make_result(na.shape, std::move(out), {a.node()}, [deriv_fn](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv_fn(in.value[i], self.value[i]);
    }
  });
}

}  // namespace

std::string to_string(const Shape& shape) {
  return "(" + std::to_string(shape.rows) + " x " + std::to_string(shape.cols) + ")";
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(shape.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw DimensionError("constant: " + std::to_string(values.size()) +
                         " values for shape " + to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->order = g_creation_counter.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(node));
}

Tensor Tensor::variable(Shape shape, std::vector<double> values) {
  Tensor t = constant(shape, std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::scalar(double value) { return constant({1, 1}, {value}); }

Tensor Tensor::zeros(Shape shape) { return constant(shape, std::vector<double>(shape.size())); }

Tensor Tensor::row(std::span<const double> values) {
  return constant({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

const Shape& Tensor::shape() const { return checked(*this, "shape").shape; }

std::span<const double> Tensor::values() const { return checked(*this, "values").value; }

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = checked(*this, "at");
  if (r >= n.shape.rows || c >= n.shape.cols) {
    throw DimensionError("at: index out of range for " + to_string(n.shape));
  }
  return n.value[r * n.shape.cols + c];
}

double Tensor::item() const {
  const auto& n = checked(*this, "item");
  if (n.shape.size() != 1) throw DimensionError("item: tensor is " + to_string(n.shape));
  return n.value[0];
}

bool Tensor::requires_grad() const { return checked(*this, "requires_grad").requires_grad; }
bool Tensor::is_leaf() const { return checked(*this, "is_leaf").leaf; }

std::span<const double> Tensor::grad() const { return checked(*this, "grad").grad; }
bool Tensor::has_grad() const { return !checked(*this, "has_grad").grad.empty(); }

void Tensor::zero_grad() {
  checked(*this, "zero_grad");
  node_->grad.clear();
}

std::span<double> Tensor::mutable_values() {
  const auto& n = checked(*this, "mutable_values");
  if (!n.leaf) throw ContractError("mutable_values: only leaves may be updated in place");
  return node_->value;
}

Tensor Tensor::detach() const {
  const auto& n = checked(*this, "detach");
  return constant(n.shape, n.value);
}

void Tensor::backward() const {
  const auto& root = checked(*this, "backward");
  if (root.shape.size() != 1) {
    throw ContractError("backward: loss must be a 1 x 1 scalar, got " + to_string(root.shape));
  }
  if (root.consumed) throw ContractError("backward: graph already consumed by a previous backward");
  if (!root.requires_grad) return;
  if (root.leaf) {
    node_->grad_buffer()[0] += 1.0;
    return;
  }

  std::vector<detail::Node*> internal;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (n->leaf) continue;
    internal.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(internal.begin(), internal.end(),
            [](const detail::Node* x, const detail::Node* y) { return x->order > y->order; });

  node_->grad_buffer()[0] += 1.0;
  for (detail::Node* n : internal) {
    if (!n->grad.empty()) n->backward(*n);
  }
  // Inputs keep interior nodes alive; release them only after every node is reset.
  std::vector<std::shared_ptr<detail::Node>> release;
  for (detail::Node* n : internal) {
    n->consumed = true;
    n->requires_grad = false;
    n->backward = nullptr;
    for (auto& in : n->inputs) release.push_back(std::move(in));
    n->inputs.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

// ---------------------------------------------------------------- arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary_broadcast(a, b, "add", [](double x, double y) { return x + y; });
  if (!out.requires_grad()) return out;
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), "add");
  out.node()->backward = [kind](detail::Node& self) {
    const std::size_t cols = self.shape.cols;
    for (int side = 0; side < 2; ++side) {
      auto& in = *self.inputs[side];
      if (!in.requires_grad) continue;
      auto& g = in.grad_buffer();
      for (std::size_t r = 0; r < self.shape.rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t idx = side == 0 ? r * cols + c : broadcast_index(kind, r, c, cols);
          g[idx] += self.grad[r * cols + c];
        }
      }
    }
  };
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary_broadcast(a, b, "sub", [](double x, double y) { return x - y; });
  if (!out.requires_grad()) return out;
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), "sub");
  out.node()->backward = [kind](detail::Node& self) {
    const std::size_t cols = self.shape.cols;
    for (int side = 0; side < 2; ++side) {
      auto& in = *self.inputs[side];
      if (!in.requires_grad) continue;
      auto& g = in.grad_buffer();
      const double sign = side == 0 ? 1.0 : -1.0;
      for (std::size_t r = 0; r < self.shape.rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t idx = side == 0 ? r * cols + c : broadcast_index(kind, r, c, cols);
          g[idx] += sign * self.grad[r * cols + c];
        }
      }
    }
  };
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary_broadcast(a, b, "mul", [](double x, double y) { return x * y; });
  if (!out.requires_grad()) return out;
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), "mul");
  out.node()->backward = [kind](detail::Node& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const std::size_t cols = self.shape.cols;
    for (std::size_t r = 0; r < self.shape.rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        const std::size_t j = broadcast_index(kind, r, c, cols);
        if (na.requires_grad) na.grad_buffer()[i] += self.grad[i] * nb.value[j];
        if (nb.requires_grad) nb.grad_buffer()[j] += self.grad[i] * na.value[i];
      }
    }
  };
  return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& na = checked(a, "matmul");
  const auto& nb = checked(b, "matmul");
  if (na.shape.cols != nb.shape.rows) {
    throw DimensionError("matmul: " + to_string(na.shape) + " x " + to_string(nb.shape));
  }
  const Shape shape{na.shape.rows, nb.shape.cols};
  std::vector<double> out(shape.size());
  MapMat(out.data(), static_cast<Eigen::Index>(shape.rows), static_cast<Eigen::Index>(shape.cols))
      .noalias() = view(na) * view(nb);
  return make_result(shape, std::move(out), {a.node(), b.node()}, [](detail::Node& self) {
    auto& in_a = *self.inputs[0];
    auto& in_b = *self.inputs[1];
    if (in_a.requires_grad) accum_view(in_a).noalias() += grad_view(self) * view(in_b).transpose();
    if (in_b.requires_grad) accum_view(in_b).noalias() += view(in_a).transpose() * grad_view(self);
  });
}

Tensor transpose(const Tensor& a) {
  const auto& na = checked(a, "transpose");
  const Shape shape{na.shape.cols, na.shape.rows};
  std::vector<double> out(shape.size());
  MapMat(out.data(), static_cast<Eigen::Index>(shape.rows), static_cast<Eigen::Index>(shape.cols)) =
      view(na).transpose();
  return make_result(shape, std::move(out), {a.node()}, [](detail::Node& self) {
    accum_view(*self.inputs[0]) += grad_view(self).transpose();
  });
}

// ---------------------------------------------------------------- structure

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    if (checked(p, "concat_rows").shape.cols != cols) {
      throw DimensionError("concat_rows: column mismatch " + to_string(p.shape()));
    }
    rows += p.rows();
    inputs.push_back(p.node());
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result({rows, cols}, std::move(out), std::move(inputs), [](detail::Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->value.size();
      if (in->requires_grad) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    if (checked(p, "concat_cols").shape.rows != rows) {
      throw DimensionError("concat_cols: row mismatch " + to_string(p.shape()));
    }
    cols += p.cols();
    inputs.push_back(p.node());
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    const auto v = p.values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * pc), pc,
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
    }
    offset += pc;
  }
  return make_result({rows, cols}, std::move(out), std::move(inputs), [](detail::Node& self) {
    const std::size_t total = self.shape.cols;
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      const std::size_t pc = in->shape.cols;
      if (in->requires_grad) {
        auto& g = in->grad_buffer();
        for (std::size_t r = 0; r < self.shape.rows; ++r) {
          for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += self.grad[r * total + off + c];
        }
      }
      off += pc;
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  const auto& na = checked(a, "slice_rows");
  if (begin + count > na.shape.rows) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + to_string(na.shape));
  }
  const std::size_t cols = na.shape.cols;
  std::vector<double> out(na.value.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          na.value.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return make_result({count, cols}, std::move(out), {a.node()}, [begin, cols](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const auto& na = checked(a, "slice_cols");
  if (begin + count > na.shape.cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + to_string(na.shape));
  }
  const std::size_t rows = na.shape.rows;
  const std::size_t cols = na.shape.cols;
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = na.value[r * cols + begin + c];
  }
  return make_result({rows, count}, std::move(out), {a.node()},
                     [begin, count, cols](detail::Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < self.shape.rows; ++r) {
                         for (std::size_t c = 0; c < count; ++c) {
                           g[r * cols + begin + c] += self.grad[r * count + c];
                         }
                       }
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  const auto& na = checked(a, "gather_rows");
  const std::size_t cols = na.shape.cols;
  std::vector<double> out(indices.size() * cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= na.shape.rows) {
      throw DimensionError("gather_rows: row " + std::to_string(indices[i]) + " out of " +
                           to_string(na.shape));
    }
    std::copy_n(na.value.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result({indices.size(), cols}, std::move(out), {a.node()},
                     [idx = std::move(idx), cols](detail::Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[idx[i] * cols + c] += self.grad[i * cols + c];
                         }
                       }
                     });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  const auto& na = checked(a, "sum");
  double total = 0.0;
  for (double v : na.value) total += v;
  return make_result({1, 1}, {total}, {a.node()}, [](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto& na = checked(a, "mean");
  if (na.value.empty()) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(na.value.size()));
}

Tensor row_sum(const Tensor& a) {
  const auto& na = checked(a, "row_sum");
  const std::size_t rows = na.shape.rows;
  const std::size_t cols = na.shape.cols;
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += na.value[r * cols + c];
  }
  return make_result({rows, 1}, std::move(out), {a.node()}, [cols](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < self.shape.rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r];
    }
  });
}

// ---------------------------------------------------------------- pointwise

Tensor abs(const Tensor& a) {
  // Subgradient 0 at the kink.
  return unary(
      a, "abs", [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : checked(a, "log").value) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, "softplus",
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

// ---------------------------------------------------------------- normalizers

Tensor softmax(const Tensor& logits, const Tensor& temperature) {
  const auto& nl = checked(logits, "softmax");
  const auto& nt = checked(temperature, "softmax");
  if (nt.shape.size() != 1) throw DimensionError("softmax: temperature must be 1 x 1");
  const double tau = nt.value[0];
  if (!(tau > 0.0)) throw DomainError("softmax: temperature must be positive");
  const std::size_t rows = nl.shape.rows;
  const std::size_t cols = nl.shape.cols;
  std::vector<double> out(nl.value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = nl.value.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = z[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, z[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp((z[c] - mx) / tau);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return make_result(nl.shape, std::move(out), {logits.node(), temperature.node()},
                     [](detail::Node& self) {
                       auto& nz = *self.inputs[0];
                       auto& ntau = *self.inputs[1];
                       const double tau = ntau.value[0];
                       const std::size_t cols = self.shape.cols;
                       double dtau = 0.0;
                       for (std::size_t r = 0; r < self.shape.rows; ++r) {
                         const double* y = self.value.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double inner = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) inner += g[c] * y[c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double dscaled = y[c] * (g[c] - inner);
                           if (nz.requires_grad) nz.grad_buffer()[r * cols + c] += dscaled / tau;
                           dtau -= dscaled * nz.value[r * cols + c] / (tau * tau);
                         }
                       }
                       if (ntau.requires_grad) ntau.grad_buffer()[0] += dtau;
                     });
}

Tensor softmax(const Tensor& logits, double temperature) {
  return softmax(logits, Tensor::scalar(temperature));
}

Tensor l2_normalize(const Tensor& a) {
  const auto& na = checked(a, "l2_normalize");
  const std::size_t rows = na.shape.rows;
  const std::size_t cols = na.shape.cols;
  std::vector<double> out(na.value.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += na.value[r * cols + c] * na.value[r * cols + c];
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0)) throw DomainError("l2_normalize: zero-norm row " + std::to_string(r));
    norms[r] = norm;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = na.value[r * cols + c] / norm;
  }
  return make_result(na.shape, std::move(out), {a.node()},
                     [norms = std::move(norms)](detail::Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       const std::size_t cols = self.shape.cols;
                       for (std::size_t r = 0; r < self.shape.rows; ++r) {
                         const double* y = self.value.data() + r * cols;
                         const double* gy = self.grad.data() + r * cols;
                         double inner = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) inner += gy[c] * y[c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[r * cols + c] += (gy[c] - y[c] * inner) / norms[r];
                         }
                       }
                     });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("dot: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return sum(mul(a, b));
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("row_dot: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return row_sum(mul(a, b));
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  const auto& na = checked(a, "cosine_similarity");
  const auto& nb = checked(b, "cosine_similarity");
  if (na.shape != nb.shape) {
    throw DimensionError("cosine_similarity: " + to_string(na.shape) + " vs " +
                         to_string(nb.shape));
  }
  const std::size_t rows = na.shape.rows;
  const std::size_t cols = na.shape.cols;
  std::vector<double> out(rows, 0.0);
  std::vector<double> norm_a(rows), norm_b(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = na.value[r * cols + c];
      const double y = nb.value[r * cols + c];
      ab += x * y;
      aa += x * x;
      bb += y * y;
    }
    norm_a[r] = std::sqrt(aa);
    norm_b[r] = std::sqrt(bb);
    out[r] = (norm_a[r] > 0.0 && norm_b[r] > 0.0) ? ab / (norm_a[r] * norm_b[r]) : 0.0;
  }
  return make_result(
      {rows, 1}, std::move(out), {a.node(), b.node()},
      [norm_a = std::move(norm_a), norm_b = std::move(norm_b)](detail::Node& self) {
        auto& ia = *self.inputs[0];
        auto& ib = *self.inputs[1];
        const std::size_t cols = ia.shape.cols;
        for (std::size_t r = 0; r < self.shape.rows; ++r) {
          if (!(norm_a[r] > 0.0 && norm_b[r] > 0.0)) continue;
          const double cosv = self.value[r];
          const double g = self.grad[r];
          const double inv = 1.0 / (norm_a[r] * norm_b[r]);
          for (std::size_t c = 0; c < cols; ++c) {
            const double x = ia.value[r * cols + c];
            const double y = ib.value[r * cols + c];
            if (ia.requires_grad) {
              ia.grad_buffer()[r * cols + c] += g * (y * inv - cosv * x / (norm_a[r] * norm_a[r]));
            }
            if (ib.requires_grad) {
              ib.grad_buffer()[r * cols + c] += g * (x * inv - cosv * y / (norm_b[r] * norm_b[r]));
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& a, double eps) {
  const auto& na = checked(a, "layer_norm");
  const std::size_t rows = na.shape.rows;
  const std::size_t cols = na.shape.cols;
  std::vector<double> out(na.value.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = na.value.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += x[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (x[c] - mu) * inv_std[r];
  }
  return make_result(na.shape, std::move(out), {a.node()},
                     [inv_std = std::move(inv_std)](detail::Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       const std::size_t cols = self.shape.cols;
                       const double n = static_cast<double>(cols);
                       for (std::size_t r = 0; r < self.shape.rows; ++r) {
                         const double* y = self.value.data() + r * cols;
                         const double* gy = self.grad.data() + r * cols;
                         double mean_g = 0.0, mean_gy = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           mean_g += gy[c];
                           mean_gy += gy[c] * y[c];
                         }
                         mean_g /= n;
                         mean_gy /= n;
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[r * cols + c] += inv_std[r] * (gy[c] - mean_g - y[c] * mean_gy);
                         }
                       }
                     });
}

// ---------------------------------------------------------------- attention

Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> segment_lengths, std::size_t heads) {
  const auto& nq = checked(q, "segment_attention");
  const auto& nk = checked(k, "segment_attention");
  const auto& nv = checked(v, "segment_attention");
  if (nq.shape != nk.shape || nq.shape != nv.shape) {
    throw DimensionError("segment_attention: q, k, v shapes differ");
  }
  if (heads == 0 || nq.shape.cols % heads != 0) {
    throw DimensionError("segment_attention: width not divisible by head count");
  }
  std::size_t total = 0;
  for (std::size_t len : segment_lengths) total += len;
  if (total != nq.shape.rows) {
    throw DimensionError("segment_attention: segment lengths do not cover all rows");
  }

  const std::size_t width = nq.shape.cols;
  const std::size_t head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<double> out(nq.value.size(), 0.0);
  // Attention probabilities per (segment, head), kept for the backward pass.
  std::vector<RowMat> probs;
  probs.reserve(segment_lengths.size() * heads);

  const ConstMapMat Q = view(nq);
  const ConstMapMat K = view(nk);
  const ConstMapMat V = view(nv);
  MapMat O(out.data(), static_cast<Eigen::Index>(nq.shape.rows), static_cast<Eigen::Index>(width));

  std::size_t offset = 0;
  for (std::size_t len : segment_lengths) {
    const auto off = static_cast<Eigen::Index>(offset);
    const auto n = static_cast<Eigen::Index>(len);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto col = static_cast<Eigen::Index>(h * head_dim);
      const auto hd = static_cast<Eigen::Index>(head_dim);
      RowMat scores = Q.block(off, col, n, hd) * K.block(off, col, n, hd).transpose() * inv_sqrt;
      for (Eigen::Index r = 0; r < n; ++r) {
        const double mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      O.block(off, col, n, hd).noalias() = scores * V.block(off, col, n, hd);
      probs.push_back(std::move(scores));
    }
    offset += len;
  }

  std::vector<std::size_t> lengths(segment_lengths.begin(), segment_lengths.end());
  return make_result(
      nq.shape, std::move(out), {q.node(), k.node(), v.node()},
      [probs = std::move(probs), lengths = std::move(lengths), heads, head_dim,
       inv_sqrt](detail::Node& self) {
        auto& iq = *self.inputs[0];
        auto& ik = *self.inputs[1];
        auto& iv = *self.inputs[2];
        const ConstMapMat Qm = view(iq);
        const ConstMapMat Km = view(ik);
        const ConstMapMat Vm = view(iv);
        const ConstMapMat G = grad_view(self);
        RowMat dQ = RowMat::Zero(Qm.rows(), Qm.cols());
        RowMat dK = RowMat::Zero(Qm.rows(), Qm.cols());
        RowMat dV = RowMat::Zero(Qm.rows(), Qm.cols());
        std::size_t offset = 0;
        std::size_t p = 0;
        for (std::size_t len : lengths) {
          const auto off = static_cast<Eigen::Index>(offset);
          const auto n = static_cast<Eigen::Index>(len);
          for (std::size_t h = 0; h < heads; ++h, ++p) {
            const auto col = static_cast<Eigen::Index>(h * head_dim);
            const auto hd = static_cast<Eigen::Index>(head_dim);
            const RowMat& P = probs[p];
            const RowMat gblock = G.block(off, col, n, hd);
            dV.block(off, col, n, hd).noalias() += P.transpose() * gblock;
            RowMat dP = gblock * Vm.block(off, col, n, hd).transpose();
            RowMat dS(n, n);
            for (Eigen::Index r = 0; r < n; ++r) {
              const double inner = (dP.row(r).array() * P.row(r).array()).sum();
              dS.row(r) = P.row(r).array() * (dP.row(r).array() - inner);
            }
            dS *= inv_sqrt;
            dQ.block(off, col, n, hd).noalias() += dS * Km.block(off, col, n, hd);
            dK.block(off, col, n, hd).noalias() += dS.transpose() * Qm.block(off, col, n, hd);
          }
          offset += len;
        }
        if (iq.requires_grad) accum_view(iq) += dQ;
        if (ik.requires_grad) accum_view(ik) += dK;
        if (iv.requires_grad) accum_view(iv) += dV;
      });
}

// ---------------------------------------------------------------- checking

double check_gradients(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                       double step) {
  const Shape shape = x.shape();
  const std::vector<double> base(x.values().begin(), x.values().end());
  Tensor probe = Tensor::variable(shape, base);
  fn(probe).backward();
  std::vector<double> analytic(base.size(), 0.0);
  if (probe.has_grad()) {
    const auto g = probe.grad();
    analytic.assign(g.begin(), g.end());
  }
  double worst = 0.0;
  std::vector<double> shifted = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    shifted[i] = base[i] + step;
    const double up = fn(Tensor::constant(shape, shifted)).item();
    shifted[i] = base[i] - step;
    const double down = fn(Tensor::constant(shape, shifted)).item();
    shifted[i] = base[i];
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8));
  }
  return worst;
}

}  // namespace partedit::ad
