#include "kbrd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "kbrd/rng.hpp"

namespace kbrd {

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> ins,
                   const char* op, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  if (GradMode::enabled()) {
    bool any = false;
    for (const Tensor* t : ins) any = any || t->requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const Tensor* t : ins) n->inputs.push_back(t->node());
      n->backward = std::move(bw);
    }
  }
  return Tensor(std::move(n));
}

Tensor make_result_n(Shape shape, std::vector<double> data, const std::vector<Tensor>& ins,
                     const char* op, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  if (GradMode::enabled()) {
    bool any = std::any_of(ins.begin(), ins.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      n->requires_grad = true;
      for (const auto& t : ins) n->inputs.push_back(t.node());
      n->backward = std::move(bw);
    }
  }
  return Tensor(std::move(n));
}

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 1 && t.dim() != 2)
    throw DimensionError(std::string(op) + ": expected a 1-D or 2-D tensor, got " + shape_str(t.shape()));
}

// Elementwise unary op with derivative expressed in terms of input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& x, const char* op, F f, D dfdx) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {&x}, op, [dfdx](Node& self) {
    Node& a = *self.inputs[0];
    if (!a.requires_grad) return;
    auto& g = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(a.data[i], self.data[i]);
  });
}

struct Broadcast {
  std::size_t rows, cols, ar, ac, br, bc;
  std::size_t ia(std::size_t r, std::size_t c) const { return (ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c); }
  std::size_t ib(std::size_t r, std::size_t c) const { return (br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c); }
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  require_2d(a, op);
  require_2d(b, op);
  Broadcast bc{0, 0, a.rows(), a.cols(), b.rows(), b.cols()};
  auto pick_dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) + " with " +
                         shape_str(b.shape()));
  };
  bc.rows = pick_dim(bc.ar, bc.br);
  bc.cols = pick_dim(bc.ac, bc.bc);
  return bc;
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const Broadcast& bc) {
  if (a.dim() == 1 && b.dim() == 1) return {bc.cols};
  return {bc.rows, bc.cols};
}

template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA dfa, DB dfb) {
  Broadcast bc = broadcast(a, b, op);
  std::vector<double> out(bc.rows * bc.cols);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c) out[r * bc.cols + c] = f(ad[bc.ia(r, c)], bd[bc.ib(r, c)]);
  return make_result(broadcast_shape(a, b, bc), std::move(out), {&a, &b}, op, [bc, dfa, dfb](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    for (std::size_t r = 0; r < bc.rows; ++r) {
      for (std::size_t c = 0; c < bc.cols; ++c) {
        const double g = self.grad[r * bc.cols + c];
        const double x = na.data[bc.ia(r, c)];
        const double y = nb.data[bc.ib(r, c)];
        if (na.requires_grad) na.ensure_grad()[bc.ia(r, c)] += g * dfa(x, y);
        if (nb.requires_grad) nb.ensure_grad()[bc.ib(r, c)] += g * dfb(x, y);
      }
    }
  });
}

struct AxisLayout {
  std::size_t outer, len, inner;
};

AxisLayout axis_layout(const Shape& s, int axis, const char* op) {
  const int nd = static_cast<int>(s.size());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw DimensionError(std::string(op) + ": axis out of range for " + shape_str(s));
  AxisLayout l{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) l.outer *= s[i];
  for (int i = axis + 1; i < nd; ++i) l.inner *= s[i];
  return l;
}

// Returns (max, log-sum-exp shifted by max) of one strided slice.
std::pair<double, double> slice_lse(const std::vector<double>& x, std::size_t base, const AxisLayout& l) {
  double mx = kNegInf;
  for (std::size_t i = 0; i < l.len; ++i) mx = std::max(mx, x[base + i * l.inner]);
  if (mx == kNegInf) throw DegenerateMaskError("softmax: slice has no finite entry (all masked)");
  double s = 0.0;
  for (std::size_t i = 0; i < l.len; ++i) s += std::exp(x[base + i * l.inner] - mx);
  return {mx, std::log(s)};
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows[0].size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("matrix literal has ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(v), requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({1, n}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
  if (dim() == 1) return 1;
  if (dim() == 2) return shape()[0];
  throw DimensionError("rows(): tensor is not 2-D: " + shape_str(shape()));
}

std::size_t Tensor::cols() const {
  if (dim() == 1) return shape()[0];
  if (dim() == 2) return shape()[1];
  throw DimensionError("cols(): tensor is not 2-D: " + shape_str(shape()));
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item(): tensor has shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::clone() const { return from(shape(), node_->data, requires_grad()); }

std::vector<Node*> topological_order(const Tensor& root) {
  std::vector<Node*> order;
  if (!root.defined() || !root.requires_grad()) return order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS: (node, next input index).
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->inputs.size()) {
      Node* child = n->inputs[i++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;
}

void Tensor::backward() const {
  if (numel() != 1) throw DimensionError("backward(): loss must be a scalar, got shape " + shape_str(shape()));
  if (!requires_grad()) return;
  auto order = topological_order(*this);
  for (Node* n : order)
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf() && n->backward) n->backward(*n);
  }
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {&a, &b}, "matmul", [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const double* G = self.grad.data();
    if (na.requires_grad) {
      // dA = dC * B^T
      auto& ga = na.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = nb.data.data() + p * n;
          const double* grow = G + i * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
    }
    if (nb.requires_grad) {
      // dB = A^T * dC
      auto& gb = nb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = na.data[i * k + p];
          if (av == 0.0) continue;
          double* brow = gb.data() + p * n;
          const double* grow = G + i * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_result({c, r}, std::move(out), {&a}, "transpose", [r, c](Node& self) {
    Node& na = *self.inputs[0];
    auto& g = na.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return make_result(std::move(shape), a.to_vector(), {&a}, "reshape", [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, "scale", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor log_sigmoid(const Tensor& x) {
  return unary(
      x, "log_sigmoid",
      [](double v) { return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); },
      // d/dx log sigmoid(x) = 1 - sigmoid(x) = sigmoid(-x)
      [](double v, double) {
        if (v >= 0) {
          const double e = std::exp(-v);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(v));
      });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {&x}, "sum", [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ---- normalization --------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  const AxisLayout l = axis_layout(x.shape(), axis, "softmax");
  const auto& in = x.node()->data;
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t q = 0; q < l.inner; ++q) {
      const std::size_t base = o * l.len * l.inner + q;
      auto [mx, lse] = slice_lse(in, base, l);
      for (std::size_t i = 0; i < l.len; ++i) {
        const std::size_t idx = base + i * l.inner;
        out[idx] = std::exp(in[idx] - mx - lse);
      }
    }
  return make_result(x.shape(), std::move(out), {&x}, "softmax", [l](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t q = 0; q < l.inner; ++q) {
        const std::size_t base = o * l.len * l.inner + q;
        double dot = 0.0;
        for (std::size_t i = 0; i < l.len; ++i) dot += self.grad[base + i * l.inner] * self.data[base + i * l.inner];
        for (std::size_t i = 0; i < l.len; ++i) {
          const std::size_t idx = base + i * l.inner;
          g[idx] += self.data[idx] * (self.grad[idx] - dot);
        }
      }
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  const AxisLayout l = axis_layout(x.shape(), axis, "log_softmax");
  const auto& in = x.node()->data;
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t q = 0; q < l.inner; ++q) {
      const std::size_t base = o * l.len * l.inner + q;
      auto [mx, lse] = slice_lse(in, base, l);
      for (std::size_t i = 0; i < l.len; ++i) {
        const std::size_t idx = base + i * l.inner;
        out[idx] = in[idx] - mx - lse;
      }
    }
  return make_result(x.shape(), std::move(out), {&x}, "log_softmax", [l](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t q = 0; q < l.inner; ++q) {
        const std::size_t base = o * l.len * l.inner + q;
        double gsum = 0.0;
        for (std::size_t i = 0; i < l.len; ++i) gsum += self.grad[base + i * l.inner];
        for (std::size_t i = 0; i < l.len; ++i) {
          const std::size_t idx = base + i * l.inner;
          g[idx] += self.grad[idx] - std::exp(self.data[idx]) * gsum;
        }
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c)
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match width of " + shape_str(x.shape()));
  auto in = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  std::vector<double> out(r * c), xhat(r * c), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += in[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[i * c + j] - mu) * (in[i * c + j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (in[i * c + j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gd[j] + bd[j];
    }
  }
  return make_result({r, c}, std::move(out), {&x, &gain, &bias}, "layer_norm",
                     [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node& nx = *self.inputs[0];
                       Node& ng = *self.inputs[1];
                       Node& nb = *self.inputs[2];
                       const double* G = self.grad.data();
                       if (ng.requires_grad) {
                         auto& gg = ng.ensure_grad();
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) gg[j] += G[i * c + j] * xhat[i * c + j];
                       }
                       if (nb.requires_grad) {
                         auto& gb = nb.ensure_grad();
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) gb[j] += G[i * c + j];
                       }
                       if (nx.requires_grad) {
                         auto& gx = nx.ensure_grad();
                         const double nc = static_cast<double>(c);
                         for (std::size_t i = 0; i < r; ++i) {
                           double s1 = 0.0, s2 = 0.0;
                           for (std::size_t j = 0; j < c; ++j) {
                             const double dxh = G[i * c + j] * ng.data[j];
                             s1 += dxh;
                             s2 += dxh * xhat[i * c + j];
                           }
                           for (std::size_t j = 0; j < c; ++j) {
                             const double dxh = G[i * c + j] * ng.data[j];
                             gx[i * c + j] += inv_std[i] / nc * (nc * dxh - s1 - xhat[i * c + j] * s2);
                           }
                         }
                       }
                     });
}

// ---- indexing -------------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  require_2d(table, "embedding_lookup");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= v)
      throw IndexError("embedding_lookup: id " + std::to_string(idx[i]) + " out of range for table with " +
                       std::to_string(v) + " rows");
    std::copy_n(td.begin() + idx[i] * d, d, out.begin() + i * d);
  }
  const std::size_t n = idx.size();
  return make_result({n, d}, std::move(out), {&table}, "embedding_lookup",
                     [idx = std::move(idx), d](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_cols");
  const std::size_t r = x.rows(), c = x.cols();
  if (begin + count > c)
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") exceeds " +
                         shape_str(x.shape()));
  std::vector<double> out(r * count);
  auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) std::copy_n(in.begin() + i * c + begin, count, out.begin() + i * count);
  return make_result({r, count}, std::move(out), {&x}, "slice_cols", [r, c, begin, count](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * c + begin + j] += self.grad[i * count + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (begin + count > r)
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") exceeds " +
                         shape_str(x.shape()));
  auto in = x.data();
  std::vector<double> out(in.begin() + begin * c, in.begin() + (begin + count) * c);
  return make_result({count, c}, std::move(out), {&x}, "slice_rows", [c, begin](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != r) throw DimensionError("concat_cols: row counts differ: " + shape_str(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    auto in = p.data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(in.begin() + i * w, w, out.begin() + i * total + off);
    off += w;
  }
  return make_result_n({r, total}, std::move(out), parts, "concat_cols",
                       [r, total, widths = std::move(widths)](Node& self) {
                         std::size_t off = 0;
                         for (std::size_t k = 0; k < widths.size(); ++k) {
                           Node& in = *self.inputs[k];
                           const std::size_t w = widths[k];
                           if (in.requires_grad) {
                             auto& g = in.ensure_grad();
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + off + j];
                           }
                           off += w;
                         }
                       });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ: " + shape_str(p.shape()));
    total += p.rows();
    sizes.push_back(p.numel());
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result_n({total, c}, std::move(out), parts, "concat_rows", [sizes = std::move(sizes)](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      Node& in = *self.inputs[k];
      if (in.requires_grad) {
        auto& g = in.ensure_grad();
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Tensor neighbor_sum(const Tensor& x, std::span<const std::vector<std::size_t>> sources, bool average) {
  require_2d(x, "neighbor_sum");
  const std::size_t n = x.rows(), d = x.cols();
  const std::size_t out_rows = sources.size();
  std::vector<std::vector<std::size_t>> src(sources.begin(), sources.end());
  std::vector<double> coef(out_rows, 1.0);
  std::vector<double> out(out_rows * d, 0.0);
  auto in = x.data();
  for (std::size_t v = 0; v < out_rows; ++v) {
    if (average && !src[v].empty()) coef[v] = 1.0 / static_cast<double>(src[v].size());
    double* o = out.data() + v * d;
    for (std::size_t w : src[v]) {
      if (w >= n) throw IndexError("neighbor_sum: source row " + std::to_string(w) + " out of range");
      const double* r = in.data() + w * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += coef[v] * r[j];
    }
  }
  return make_result({out_rows, d}, std::move(out), {&x}, "neighbor_sum",
                     [d, src = std::move(src), coef = std::move(coef)](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       for (std::size_t v = 0; v < src.size(); ++v) {
                         const double* gv = self.grad.data() + v * d;
                         for (std::size_t w : src[v]) {
                           double* gw = g.data() + w * d;
                           for (std::size_t j = 0; j < d; ++j) gw[j] += coef[v] * gv[j];
                         }
                       }
                     });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> cols) {
  require_2d(x, "pick");
  const std::size_t r = x.rows(), c = x.cols();
  if (cols.size() != r)
    throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " + shape_str(x.shape()));
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  std::vector<double> out(r);
  auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    if (idx[i] >= c)
      throw IndexError("pick: column " + std::to_string(idx[i]) + " out of range for " + shape_str(x.shape()));
    out[i] = in[i * c + idx[i]];
  }
  return make_result({r, 1}, std::move(out), {&x}, "pick", [c, idx = std::move(idx)](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) g[i * c + idx[i]] += self.grad[i];
  });
}

// ---- losses ---------------------------------------------------------------

Tensor cross_entropy(const Tensor& log_probs, std::span<const std::size_t> targets, CrossEntropyOptions opts) {
  require_2d(log_probs, "cross_entropy");
  const std::size_t n = log_probs.rows(), v = log_probs.cols();
  if (targets.size() != n)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         shape_str(log_probs.shape()));
  if (n == 0) throw DimensionError("cross_entropy: no rows");
  auto lp = log_probs.data();
  std::vector<std::size_t> idx(targets.begin(), targets.end());
  std::vector<char> clamped(n, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= v)
      throw IndexError("cross_entropy: target " + std::to_string(idx[i]) + " out of range for " +
                       std::to_string(v) + " classes");
    const double l = -lp[i * v + idx[i]];
    if (!std::isfinite(l)) {
      std::cerr << "warning: cross_entropy: target " << idx[i] << " in row " << i
                << " has zero probability; loss clamped to " << opts.loss_ceiling << '\n';
      clamped[i] = 1;
      total += opts.loss_ceiling;
    } else {
      total += l;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return make_result({1}, {total * inv_n}, {&log_probs}, "cross_entropy",
                     [v, inv_n, idx = std::move(idx), clamped = std::move(clamped)](Node& self) {
                       auto& g = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         if (!clamped[i]) g[i * v + idx[i]] -= self.grad[0] * inv_n;
                     });
}

// ---- regularization -------------------------------------------------------

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  return make_result(x.shape(), std::move(out), {&x}, "dropout", [mask = std::move(mask)](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

}  // namespace kbrd
