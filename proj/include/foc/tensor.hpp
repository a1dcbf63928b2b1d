// Minimal reverse-mode differentiation over dense row-major 2-D arrays.
//
// A Tensor is a cheap handle onto a shared node. Operations build a fresh
// graph on every forward pass; calling backward() on a 1x1 result pushes
// gradients into every reachable node that requires them. Parameters are
// leaves created with requires_grad = true and keep their grad buffers
// between passes until zero_grad() is called.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace foc::nd {

inline constexpr double kDefaultLogEps = 1e-12;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until materialized
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  Shape shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->values.size(); }
  bool empty() const { return size() == 0; }

  std::span<const double> values() const { return node_->values; }
  std::span<double> mutable_values() { return node_->values; }
  double operator()(std::size_t r, std::size_t c) const { return node_->values[r * cols() + c]; }
  double item() const;

  // Zero-filled view when the gradient has never been materialized.
  std::vector<double> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }

  // Copy of the values with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

// Builds an op output. The backward closure receives the output node and must
// add into the grad buffers of parents that require grad.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn);

// out = X W + b, with b broadcast over rows.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor clamped_log(const Tensor& x, double eps = kDefaultLogEps);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// alpha * x + beta, elementwise.
Tensor scale_shift(const Tensor& x, double alpha, double beta = 0.0);

Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
Tensor sum_rows(const Tensor& x);  // n x k -> n x 1
Tensor sum_cols(const Tensor& x);  // n x k -> 1 x k

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_rows(std::span<const Tensor> parts);

void backward(const Tensor& loss);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_shape(Shape shape);
};

// In-place Adam update of a parameter from its accumulated grad.
void adam_step(Tensor& param, AdamState& state, double lr);
// Same update from an explicit gradient vector.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state, double lr);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double finite_diff_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                         std::span<const Tensor> inputs, double h);
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace foc::nd
