#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices of
// doubles. Every tensor is rank 2; vectors are 1 x n rows and scalars are 1 x 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace partedit::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  [[nodiscard]] std::size_t size() const { return rows * cols; }
  [[nodiscard]] std::vector<std::size_t> dims() const { return {rows, cols}; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::uint64_t order = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  /// Leaf that never receives gradients.
  static Tensor constant(Shape shape, std::vector<double> values);
  /// Leaf that accumulates d(loss)/d(leaf) on every backward pass.
  static Tensor variable(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor row(std::span<const double> values);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Shape& shape() const;
  [[nodiscard]] std::size_t rows() const { return shape().rows; }
  [[nodiscard]] std::size_t cols() const { return shape().cols; }
  [[nodiscard]] std::size_t size() const { return shape().size(); }
  [[nodiscard]] std::span<const double> values() const;
  [[nodiscard]] double at(std::size_t r, std::size_t c) const;
  [[nodiscard]] double item() const;
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] bool is_leaf() const;

  /// Empty span when no gradient has been accumulated.
  [[nodiscard]] std::span<const double> grad() const;
  [[nodiscard]] bool has_grad() const;
  void zero_grad();

  /// Writable storage of a leaf, for optimizer updates between graphs.
  std::span<double> mutable_values();

  /// Same values as a gradient-free constant, detached from any graph.
  [[nodiscard]] Tensor detach() const;

  /// Runs the backward pass from a 1 x 1 loss and frees the graph.
  void backward() const;

  [[nodiscard]] const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Elementwise arithmetic. The second operand of add/sub/mul may broadcast:
// same shape, 1 x 1, 1 x cols (per row) or rows x 1 (per column).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_sum(const Tensor& a);

Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);

/// Row-wise softmax of logits / temperature; temperature is a positive 1 x 1 tensor.
Tensor softmax(const Tensor& logits, const Tensor& temperature);
Tensor softmax(const Tensor& logits, double temperature = 1.0);

/// Row-wise unit L2 normalization; a zero row is a domain error.
Tensor l2_normalize(const Tensor& a);
/// Sum of elementwise products of two equally shaped tensors.
Tensor dot(const Tensor& a, const Tensor& b);
Tensor row_dot(const Tensor& a, const Tensor& b);
/// Row-wise cosine similarity (rows x 1). A row pair where either side is the
/// zero vector yields 0 with zero gradient.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
/// Row-wise standardization to zero mean, unit variance (no affine part).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

/// Scaled dot-product self-attention restricted to consecutive row segments.
/// q, k, v are (total rows) x (heads * head_dim); segment lengths sum to rows.
Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> segment_lengths, std::size_t heads);

/// Max over components of |autodiff - central difference| / (|central difference| + 1e-8).
double check_gradients(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                       double step = 1e-5);

}  // namespace partedit::ad
