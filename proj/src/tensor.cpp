#include "foc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace foc::nd {

namespace {

void check_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::domain_error("tensor: non-finite value");
  }
}

std::string shape_str(Shape s) {
  return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")";
}

}  // namespace

Tensor::Tensor() : Tensor(Shape{0, 0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (values.size() != shape.size()) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  check_finite(values);
  node_->shape = shape;
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->ensure_grad();
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor(Shape{1, 1}, {v}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape()));
  return node_->values[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->requires_grad) {
    node_->grad.assign(node_->values.size(), 0.0);
  } else {
    node_->grad.clear();
  }
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->values); }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->values = std::move(values);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.node()->requires_grad;
  node->requires_grad = needs;
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  const std::size_t n = a.rows(), d = a.cols(), m = b.cols();
  std::vector<double> out(n * m, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out.data() + i * m;
    for (std::size_t t = 0; t < d; ++t) {
      const double x = av[i * d + t];
      if (x == 0.0) continue;
      const double* brow = bv.data() + t * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += x * brow[j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result({n, m}, std::move(out), {a, b}, [an, bn, n, d, m](detail::Node& o) {
    const double* g = o.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      // dA = G B^T
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < d; ++t) {
          const double* brow = bn->values.data() + t * m;
          const double* grow = g + i * m;
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
          an->grad[i * d + t] += s;
        }
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      // dB = A^T G
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g + i * m;
        for (std::size_t t = 0; t < d; ++t) {
          const double x = an->values[i * d + t];
          if (x == 0.0) continue;
          double* dbrow = bn->grad.data() + t * m;
          for (std::size_t j = 0; j < m; ++j) dbrow[j] += x * grow[j];
        }
      }
    }
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw ShapeError("affine: X" + shape_str(x.shape()) + " W" + shape_str(w.shape()) + " b" +
                     shape_str(b.shape()));
  }
  Tensor xw = matmul(x, w);
  const std::size_t n = xw.rows(), m = xw.cols();
  std::vector<double> out(xw.values().begin(), xw.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bv[j];
  }
  auto xwn = xw.node();
  auto bn = b.node();
  return make_result({n, m}, std::move(out), {xw, b}, [xwn, bn, n, m](detail::Node& o) {
    if (xwn->requires_grad) {
      xwn->ensure_grad();
      for (std::size_t i = 0; i < n * m; ++i) xwn->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) bn->grad[j] += o.grad[i * m + j];
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n * m);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = xv[i * m + j];
  }
  auto xn = x.node();
  return make_result({m, n}, std::move(out), {x}, [xn, n, m](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) xn->grad[i * m + j] += o.grad[j * n + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, [xn](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.values.size(); ++i) {
      if (xn->values[i] > 0.0) xn->grad[i] += o.grad[i];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(n * k);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * k;
    double* orow = out.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      orow[j] = std::exp(row[j] - mx);
      s += orow[j];
    }
    for (std::size_t j = 0; j < k; ++j) orow[j] /= s;
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, [xn, n, k](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = o.values.data() + i * k;
      const double* g = o.grad.data() + i * k;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < k; ++j) xn->grad[i * k + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor clamped_log(const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("clamped_log: eps must be positive");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(xv[i], eps));
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, [xn, eps](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.values.size(); ++i) {
      const double v = xn->values[i];
      if (v > eps) xn->grad[i] += o.grad[i] / v;
    }
  });
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& o) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) p->grad[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * bn->values[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i] * an->values[i];
    }
  });
}

Tensor scale_shift(const Tensor& x, double alpha, double beta) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * x.values()[i] + beta;
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {x}, [xn, alpha](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += alpha * o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce_sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto xn = x.node();
  return make_result({1, 1}, {s}, {x}, [xn](detail::Node& o) {
    xn->ensure_grad();
    for (double& g : xn->grad) g += o.grad[0];
  });
}

Tensor reduce_mean(const Tensor& x) {
  if (x.empty()) throw ShapeError("reduce_mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto xn = x.node();
  return make_result({1, 1}, {s * inv}, {x}, [xn, inv](detail::Node& o) {
    xn->ensure_grad();
    for (double& g : xn->grad) g += o.grad[0] * inv;
  });
}

Tensor sum_rows(const Tensor& x) {
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i] += x.values()[i * k + j];
  }
  auto xn = x.node();
  return make_result({n, 1}, std::move(out), {x}, [xn, n, k](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) xn->grad[i * k + j] += o.grad[i];
    }
  });
}

Tensor sum_cols(const Tensor& x) {
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[j] += x.values()[i * k + j];
  }
  auto xn = x.node();
  return make_result({1, k}, std::move(out), {x}, [xn, n, k](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) xn->grad[i * k + j] += o.grad[j];
    }
  });
}

// ---------------------------------------------------------------------------
// Row selection

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of " + shape_str(x.shape()));
  }
  const std::size_t k = x.cols();
  std::vector<double> out(x.values().begin() + begin * k, x.values().begin() + end * k);
  auto xn = x.node();
  return make_result({end - begin, k}, std::move(out), {x}, [xn, begin, k](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[begin * k + i] += o.grad[i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t k = x.cols();
  std::vector<double> out;
  out.reserve(rows.size() * k);
  for (std::size_t r : rows) {
    if (r >= x.rows()) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range");
    out.insert(out.end(), x.values().begin() + r * k, x.values().begin() + (r + 1) * k);
  }
  auto xn = x.node();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), k}, std::move(out), {x}, [xn, idx, k](detail::Node& o) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < k; ++j) xn->grad[idx[i] * k + j] += o.grad[i * k + j];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor();
  const std::size_t k = parts.front().cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.cols() != k) throw ShapeError("concat_rows: column mismatch");
    n += p.rows();
  }
  std::vector<double> out;
  out.reserve(n * k);
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    nodes.push_back(p.node());
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result({n, k}, std::move(out), std::move(parents), [nodes](detail::Node& o) {
    std::size_t off = 0;
    for (const auto& p : nodes) {
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < p->values.size(); ++i) p->grad[i] += o.grad[off + i];
      }
      off += p->values.size();
    }
  });
}

// ---------------------------------------------------------------------------
// Backward pass

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads start from zero on every call; leaves accumulate.
  for (auto* n : order) {
    if (n->backward_fn) n->grad.assign(n->values.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::for_shape(Shape shape) {
  AdamState s;
  s.first_moment.assign(shape.size(), 0.0);
  s.second_moment.assign(shape.size(), 0.0);
  return s;
}

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state, double lr) {
  if (param.size() != grad.size() || state.first_moment.size() != param.size() ||
      state.second_moment.size() != param.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

void adam_step(Tensor& param, AdamState& state, double lr) {
  auto g = param.grad();
  adam_step(param.mutable_values(), g, state, lr);
}

// ---------------------------------------------------------------------------
// Finite differences

double finite_diff_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                         std::span<const Tensor> inputs, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");
  std::vector<Tensor> leaves;
  for (const auto& x : inputs) {
    leaves.emplace_back(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  }
  backward(f(leaves));

  std::vector<Tensor> probe;
  for (const auto& x : inputs) probe.push_back(x.detach());

  double worst = 0.0;
  for (std::size_t a = 0; a < leaves.size(); ++a) {
    const auto analytic = leaves[a].grad();
    auto vals = probe[a].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = f(probe).item();
      vals[i] = orig - h;
      const double down = f(probe).item();
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  const Tensor inputs[] = {x};
  return finite_diff_check([&f](std::span<const Tensor> xs) { return f(xs[0]); }, inputs, h);
}

}  // namespace foc::nd
