#include "foc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace foc {

void LossWeights::validate() const {
  if (!(lambda_s >= 0.0) || !(lambda_u >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (lambda_s == 0.0 && lambda_u == 0.0) {
    throw std::invalid_argument("loss weights lambda_s and lambda_u cannot both be zero");
  }
}

namespace {

void check_pair(const char* op, const nd::Tensor& z1, const nd::Tensor& z2) {
  if (z1.shape() != z2.shape()) {
    throw nd::ShapeError(std::string(op) + ": paired predictions differ in shape");
  }
  if (z1.rows() == 0) throw nd::ShapeError(std::string(op) + ": empty batch");
}

}  // namespace

JointDistribution joint_distribution(const nd::Tensor& z1, const nd::Tensor& z2) {
  check_pair("joint_distribution", z1, z2);
  const std::size_t n = z1.rows(), k = z1.cols();
  std::vector<double> q(k * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      const double x = z1(i, a);
      for (std::size_t b = 0; b < k; ++b) q[a * k + b] += x * z2(i, b);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : q) v *= inv_n;

  JointDistribution j;
  j.k = k;
  j.p.resize(k * k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) j.p[a * k + b] = (q[a * k + b] + q[b * k + a]) / 2.0;
  }
  j.marginal_row.assign(k, 0.0);
  j.marginal_col.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      j.marginal_row[a] += j.p[a * k + b];
      j.marginal_col[b] += j.p[a * k + b];
    }
  }
  return j;
}

double mutual_information(const JointDistribution& joint, double eps) {
  double mi = 0.0;
  for (std::size_t a = 0; a < joint.k; ++a) {
    for (std::size_t b = 0; b < joint.k; ++b) {
      const double p = joint(a, b);
      const double indep = joint.marginal_row[a] * joint.marginal_col[b];
      mi += p * (std::log(std::max(p, eps)) - std::log(std::max(indep, eps)));
    }
  }
  return mi;
}

nd::Tensor mi_loss(const nd::Tensor& z1, const nd::Tensor& z2, double eps) {
  check_pair("mi_loss", z1, z2);
  const double inv_n = 1.0 / static_cast<double>(z1.rows());
  nd::Tensor q = nd::scale_shift(nd::matmul(nd::transpose(z1), z2), inv_n);
  nd::Tensor p = nd::scale_shift(nd::add(q, nd::transpose(q)), 0.5);
  nd::Tensor indep = nd::matmul(nd::sum_rows(p), nd::sum_cols(p));
  nd::Tensor log_ratio = nd::sub(nd::clamped_log(p, eps), nd::clamped_log(indep, eps));
  return nd::scale_shift(nd::reduce_sum(nd::mul(p, log_ratio)), -1.0);
}

nd::Tensor cross_entropy(const nd::Tensor& z, std::span<const int> labels, double eps) {
  if (labels.size() != z.rows()) throw nd::ShapeError("cross_entropy: label count differs from rows");
  if (z.rows() == 0) throw nd::ShapeError("cross_entropy: empty batch");
  const std::size_t n = z.rows(), k = z.cols();
  // One-hot mask times log-probabilities keeps the op composite and checkable.
  std::vector<double> onehot(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    onehot[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  nd::Tensor mask({n, k}, std::move(onehot));
  nd::Tensor picked = nd::reduce_sum(nd::mul(mask, nd::clamped_log(z, eps)));
  return nd::scale_shift(picked, -1.0 / static_cast<double>(n));
}

nd::Tensor ce_inverse_pair(const nd::Tensor& p, const nd::Tensor& q, double eps) {
  if (p.shape() != q.shape()) throw nd::ShapeError("ce_inverse_pair: width or row mismatch");
  if (p.rows() == 0) throw nd::ShapeError("ce_inverse_pair: empty batch");
  nd::Tensor log_rest = nd::clamped_log(nd::scale_shift(q, -1.0, 1.0), eps);
  nd::Tensor total = nd::reduce_sum(nd::mul(p, log_rest));
  return nd::scale_shift(total, -1.0 / static_cast<double>(p.rows()));
}

nd::Tensor ce_inverse_triplet(const nd::Tensor& z1, const nd::Tensor& z2, const nd::Tensor& z3, double eps) {
  if (z1.shape() != z2.shape() || z1.shape() != z3.shape()) {
    throw nd::ShapeError("ce_inverse_triplet: shape mismatch");
  }
  nd::Tensor a = ce_inverse_pair(z1, z3, eps);
  nd::Tensor b = ce_inverse_pair(z2, z3, eps);
  return nd::scale_shift(nd::add(a, b), 0.5);
}

nd::Tensor combined_loss(const nd::Tensor& supervised, const nd::Tensor& unsupervised, const LossWeights& w) {
  return nd::add(nd::scale_shift(supervised, w.lambda_s), nd::scale_shift(unsupervised, w.lambda_u));
}

}  // namespace foc
