// Dense 64-bit tensors with define-by-run reverse-mode differentiation.
//
// Every operation allocates a fresh result tensor. When gradient recording is
// enabled and at least one input requires a gradient, the result keeps
// references to its inputs plus a closure that pushes the upstream gradient
// back into them. Calling backward() on a scalar walks that graph in reverse
// topological order.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbrd/errors.hpp"

namespace kbrd {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Thread-local switch for graph recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Row-major 2-D literal, e.g. matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  /// Rows/cols of a 2-D tensor; a 1-D tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }
  std::vector<double> to_vector() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }
  bool is_leaf() const { return node_->is_leaf(); }
  const char* op_name() const { return node_->op; }

  /// Reverse sweep from a one-element tensor. Leaf gradients accumulate across
  /// calls; interior gradients are recomputed each time.
  void backward() const;

  /// Same values, no graph history, no gradient requirement.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Nodes reachable from `root` that participate in differentiation, inputs
/// before consumers.
std::vector<detail::Node*> topological_order(const Tensor& root);

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// ---- elementwise ----------------------------------------------------------
// Binary ops broadcast 2-D operands whose rows or cols equal 1.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// log(sigmoid(x)) evaluated without overflow.
Tensor log_sigmoid(const Tensor& x);

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- normalization --------------------------------------------------------

/// Softmax along `axis` (negative counts from the end). -inf entries map to
/// exactly 0. Throws DegenerateMaskError if a slice has no finite entry.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);

/// Row-wise layer normalization of a 2-D tensor followed by gain and bias
/// (both 1 x cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// ---- indexing -------------------------------------------------------------

/// Gathers rows of a 2-D table. Backward scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// out[v] = sum of x[w] over w in sources[v] (mean when `average`). The output
/// has sources.size() rows.
Tensor neighbor_sum(const Tensor& x, std::span<const std::vector<std::size_t>> sources, bool average = false);
/// out[i] = x[i, cols[i]] as an n x 1 column.
Tensor pick(const Tensor& x, std::span<const std::size_t> cols);

// ---- losses ---------------------------------------------------------------

struct CrossEntropyOptions {
  /// Per-row loss ceiling applied when a target has probability zero.
  double loss_ceiling = 100.0;
};

/// Mean of -log_probs[i, targets[i]]. Rows whose target log-probability is
/// -inf are clamped to the ceiling, contribute no gradient and trigger a
/// warning on stderr.
Tensor cross_entropy(const Tensor& log_probs, std::span<const std::size_t> targets,
                     CrossEntropyOptions opts = {});

// ---- regularization -------------------------------------------------------

class Rng;

/// Inverted dropout; identity when `training` is false or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

}  // namespace kbrd
