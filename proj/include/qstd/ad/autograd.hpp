// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value is a 2-D matrix; scalars are 1x1.
//
// A Var owns a shared node. Operations record their parents and a backward
// closure only when some parent requires a gradient and recording is enabled,
// so inference under NoGradGuard builds no graph.
#pragma once

#include "qstd/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_set>
#include <vector>

namespace qstd::ad {

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Mat& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  Node& parent(std::size_t i) { return *parents[i]; }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Var {
 public:
  Var() : node_(std::make_shared<Node>()) {}
  explicit Var(Mat value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  /// Gradient accumulated by backward(); zeros when nothing flowed here.
  Mat grad() const { return node_->grad.size() ? node_->grad : Mat::Zero(rows(), cols()); }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Creates a result node; `backward` receives the result node whose `grad`
/// holds dL/d(result) and must push contributions into its parents.
inline Var make_op(Mat value, std::initializer_list<Var> parents, std::function<void(Node&)> backward) {
  Var out(std::move(value));
  if (!detail::grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  auto& n = *out.node();
  n.requires_grad = true;
  for (const auto& p : parents) n.parents.push_back(p.node());
  n.backward = std::move(backward);
  return out;
}

inline Var make_op(Mat value, const std::vector<Var>& parents, std::function<void(Node&)> backward) {
  Var out(std::move(value));
  if (!detail::grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  auto& n = *out.node();
  n.requires_grad = true;
  for (const auto& p : parents) n.parents.push_back(p.node());
  n.backward = std::move(backward);
  return out;
}

/// Back-propagates from a 1x1 root, accumulating into every reachable node.
inline void backward(const Var& root) {
  require_shape(root.rows() == 1 && root.cols() == 1, "backward() needs a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->accumulate(Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra primitives

inline Var constant(Mat m) { return Var(std::move(m), false); }

/// Same value, no gradient path (the stop-gradient operator).
inline Var detach(const Var& a) { return Var(a.value(), false); }

inline Var matmul(const Var& a, const Var& b) {
  require_shape(a.cols() == b.rows(), "matmul: " + shape_str(a.value()) + " x " + shape_str(b.value()));
  return make_op(a.value() * b.value(), {a, b}, [](Node& self) {
    auto& a = self.parent(0);
    auto& b = self.parent(1);
    if (a.requires_grad) a.accumulate(self.grad * b.value.transpose());
    if (b.requires_grad) b.accumulate(a.value.transpose() * self.grad);
  });
}

inline Var add(const Var& a, const Var& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(),
                "add: " + shape_str(a.value()) + " + " + shape_str(b.value()));
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    self.parent(0).accumulate(self.grad);
    self.parent(1).accumulate(self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(),
                "sub: " + shape_str(a.value()) + " - " + shape_str(b.value()));
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    self.parent(0).accumulate(self.grad);
    self.parent(1).accumulate(-self.grad);
  });
}

inline Var mul(const Var& a, const Var& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    auto& a = self.parent(0);
    auto& b = self.parent(1);
    if (a.requires_grad) a.accumulate(self.grad.cwiseProduct(b.value));
    if (b.requires_grad) b.accumulate(self.grad.cwiseProduct(a.value));
  });
}

inline Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) { self.parent(0).accumulate(self.grad * s); });
}

/// a (n x c) + row (1 x c) broadcast over rows.
inline Var add_row(const Var& a, const Var& row) {
  require_shape(row.rows() == 1 && row.cols() == a.cols(),
                "add_row: " + shape_str(a.value()) + " + " + shape_str(row.value()));
  Mat out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    self.parent(0).accumulate(self.grad);
    auto& r = self.parent(1);
    if (r.requires_grad) r.accumulate(self.grad.colwise().sum());
  });
}

/// Repeats a 1 x c row n times.
inline Var broadcast_rows(const Var& row, Index n) {
  require_shape(row.rows() == 1, "broadcast_rows: expected a single row");
  Mat out = row.value().replicate(n, 1);
  return make_op(std::move(out), {row}, [](Node& self) { self.parent(0).accumulate(self.grad.colwise().sum()); });
}

inline Var leaky_relu(const Var& a, double slope = 0.2) {
  Mat out = a.value().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return make_op(std::move(out), {a}, [slope](Node& self) {
    auto& a = self.parent(0);
    Mat d = a.value.unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    a.accumulate(self.grad.cwiseProduct(d));
  });
}

/// tanh approximation of GELU.
inline Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  Mat out = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); });
  return make_op(std::move(out), {a}, [](Node& self) {
    auto& a = self.parent(0);
    Mat d = a.value.unaryExpr([](double x) {
      const double u = c * (x + 0.044715 * x * x * x);
      const double t = std::tanh(u);
      const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    });
    a.accumulate(self.grad.cwiseProduct(d));
  });
}

inline Var transpose(const Var& a) {
  Mat out = a.value().transpose();
  return make_op(std::move(out), {a}, [](Node& self) { self.parent(0).accumulate(self.grad.transpose()); });
}

/// Reinterprets the row-major buffer with a new shape.
inline Var reshape(const Var& a, Index rows, Index cols) {
  require_shape(rows * cols == a.value().size(), "reshape: element count mismatch");
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  const Index r0 = a.rows(), c0 = a.cols();
  return make_op(std::move(out), {a}, [r0, c0](Node& self) {
    self.parent(0).accumulate(Eigen::Map<const Mat>(self.grad.data(), r0, c0));
  });
}

inline Var slice_cols(const Var& a, Index start, Index count) {
  require_shape(start >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Mat out = a.value().middleCols(start, count);
  return make_op(std::move(out), {a}, [start, count](Node& self) {
    auto& a = self.parent(0);
    Mat g = Mat::Zero(a.value.rows(), a.value.cols());
    g.middleCols(start, count) = self.grad;
    a.accumulate(g);
  });
}

inline Var slice_rows(const Var& a, Index start, Index count) {
  require_shape(start >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Mat out = a.value().middleRows(start, count);
  return make_op(std::move(out), {a}, [start, count](Node& self) {
    auto& a = self.parent(0);
    Mat g = Mat::Zero(a.value.rows(), a.value.cols());
    g.middleRows(start, count) = self.grad;
    a.accumulate(g);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  require_shape(!parts.empty(), "concat_cols: nothing to concatenate");
  Index cols = 0;
  for (const auto& p : parts) {
    require_shape(p.rows() == parts.front().rows(), "concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat out(parts.front().rows(), cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op(std::move(out), parts, [](Node& self) {
    Index at = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parent(i);
      const Index c = p.value.cols();
      if (p.requires_grad) p.accumulate(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

/// Output row i is a[indices[i]], or a zero row where indices[i] < 0.
inline Var gather_rows(const Var& a, std::vector<int> indices) {
  Mat out(static_cast<Index>(indices.size()), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int src = indices[i];
    require_shape(src < a.rows(), "gather_rows: index out of range");
    if (src < 0) {
      out.row(static_cast<Index>(i)).setZero();
    } else {
      out.row(static_cast<Index>(i)) = a.value().row(src);
    }
  }
  return make_op(std::move(out), {a}, [idx = std::move(indices)](Node& self) {
    auto& a = self.parent(0);
    Mat g = Mat::Zero(a.value.rows(), a.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= 0) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    }
    a.accumulate(g);
  });
}

/// Row-wise softmax of (a + bias). `bias` is a constant of the same shape
/// (use -inf to mask); every row must keep at least one finite entry.
inline Var softmax_rows(const Var& a, const Mat* bias = nullptr) {
  Mat z = bias ? Mat(a.value() + *bias) : a.value();
  Mat out(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    require_shape(!bias || std::isfinite(bias->row(i).maxCoeff()), "softmax_rows: row fully masked");
    const double m = z.row(i).maxCoeff();
    if (!std::isfinite(m)) {
      // Non-finite scores give a NaN row.
      out.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    auto e = (z.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  Mat y = out;
  return make_op(std::move(out), {a}, [y = std::move(y)](Node& self) {
    // dz = y * (g - sum(g * y))
    Mat gy = self.grad.cwiseProduct(y);
    Eigen::VectorXd s = gy.rowwise().sum();
    Mat dz = gy - y.cwiseProduct(s.replicate(1, y.cols()));
    self.parent(0).accumulate(dz);
  });
}

/// Per-row layer normalisation with learnable gain and shift (both 1 x c).
inline Var layer_norm_rows(const Var& x, const Var& gain, const Var& shift, double eps = 1e-5) {
  require_shape(gain.rows() == 1 && gain.cols() == x.cols() && shift.cols() == x.cols(), "layer_norm: shape mismatch");
  const Index n = x.rows(), c = x.cols();
  Mat xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const double mean = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mean).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mean) * inv_std[i];
  }
  Mat out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + shift.value().row(0).array();
  return make_op(std::move(out), {x, gain, shift}, [xhat = std::move(xhat), inv_std](Node& self) {
    auto& x = self.parent(0);
    auto& g = self.parent(1);
    auto& b = self.parent(2);
    if (g.requires_grad) g.accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
    if (b.requires_grad) b.accumulate(self.grad.colwise().sum());
    if (x.requires_grad) {
      Mat gh = self.grad.array().rowwise() * g.value.row(0).array();
      const double c = static_cast<double>(gh.cols());
      Mat dx(gh.rows(), gh.cols());
      for (Index i = 0; i < gh.rows(); ++i) {
        const double m1 = gh.row(i).mean();
        const double m2 = gh.row(i).dot(xhat.row(i)) / c;
        dx.row(i) = inv_std[i] * (gh.row(i).array() - m1 - xhat.row(i).array() * m2);
      }
      x.accumulate(dx);
    }
  });
}

/// out row i = x[s0] + sum_{j>0} w_j (x[sj] - x[s0]), applied independently to
/// each of `blocks` stacked row blocks of `in_rows` rows.
template <typename AffineRows>
inline Var mix_rows(const Var& x, const AffineRows& rows, Index in_rows, Index blocks) {
  require_shape(x.rows() == in_rows * blocks, "mix_rows: expected " + std::to_string(in_rows * blocks) + " rows");
  const Index out_rows = static_cast<Index>(rows.size());
  Mat out(out_rows * blocks, x.cols());
  for (Index b = 0; b < blocks; ++b) {
    const Index base = b * in_rows;
    for (Index i = 0; i < out_rows; ++i) {
      const auto& src = rows[static_cast<std::size_t>(i)];
      auto r = out.row(b * out_rows + i);
      r = x.value().row(base + src.front().index);
      for (std::size_t j = 1; j < src.size(); ++j) {
        r += src[j].weight * (x.value().row(base + src[j].index) - x.value().row(base + src.front().index));
      }
    }
  }
  return make_op(std::move(out), {x}, [rows, in_rows, blocks, out_rows](Node& self) {
    auto& x = self.parent(0);
    Mat g = Mat::Zero(x.value.rows(), x.value.cols());
    for (Index b = 0; b < blocks; ++b) {
      const Index base = b * in_rows;
      for (Index i = 0; i < out_rows; ++i) {
        const auto& src = rows[static_cast<std::size_t>(i)];
        auto gr = self.grad.row(b * out_rows + i);
        double rest = 0.0;
        for (std::size_t j = 1; j < src.size(); ++j) {
          g.row(base + src[j].index) += src[j].weight * gr;
          rest += src[j].weight;
        }
        g.row(base + src.front().index) += (1.0 - rest) * gr;
      }
    }
    x.accumulate(g);
  });
}

/// Forward value is `quantized`; the gradient passes to `continuous` unchanged.
inline Var straight_through(const Var& continuous, const Mat& quantized) {
  require_shape(continuous.rows() == quantized.rows() && continuous.cols() == quantized.cols(),
                "straight_through: shape mismatch");
  return make_op(quantized, {continuous}, [](Node& self) { self.parent(0).accumulate(self.grad); });
}

// ---------------------------------------------------------------------------
// Reductions and losses (all per-element means)

inline Var sum(const Var& a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [](Node& self) {
    auto& a = self.parent(0);
    a.accumulate(Mat::Constant(a.value.rows(), a.value.cols(), self.grad(0, 0)));
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// mean |a - b|
inline Var l1_loss(const Var& a, const Var& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "l1_loss: shape mismatch");
  Mat diff = a.value() - b.value();
  const double n = static_cast<double>(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.cwiseAbs().sum() / n;
  return make_op(std::move(out), {a, b}, [diff = std::move(diff), n](Node& self) {
    Mat g = diff.unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); }) * (self.grad(0, 0) / n);
    self.parent(0).accumulate(g);
    self.parent(1).accumulate(-g);
  });
}

/// mean (a - b)^2
inline Var mse_loss(const Var& a, const Var& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mse_loss: shape mismatch");
  Mat diff = a.value() - b.value();
  const double n = static_cast<double>(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return make_op(std::move(out), {a, b}, [diff = std::move(diff), n](Node& self) {
    Mat g = diff * (2.0 * self.grad(0, 0) / n);
    self.parent(0).accumulate(g);
    self.parent(1).accumulate(-g);
  });
}

inline double huber(double e, double delta) {
  const double a = std::abs(e);
  return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

/// mean Huber(a - b) with threshold delta.
inline Var huber_loss(const Var& a, const Var& b, double delta) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "huber_loss: shape mismatch");
  Mat diff = a.value() - b.value();
  const double n = static_cast<double>(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.unaryExpr([delta](double e) { return huber(e, delta); }).sum() / n;
  return make_op(std::move(out), {a, b}, [diff = std::move(diff), n, delta](Node& self) {
    Mat g = diff.unaryExpr([delta](double e) { return std::clamp(e, -delta, delta); }) * (self.grad(0, 0) / n);
    self.parent(0).accumulate(g);
    self.parent(1).accumulate(-g);
  });
}

// Operator sugar.
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace qstd::ad
