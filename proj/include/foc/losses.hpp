// Training objectives: paired-prediction mutual information, cross-entropy,
// inverse cross-entropy and their weighted combination.
#pragma once

#include <span>
#include <vector>

#include "foc/tensor.hpp"

namespace foc {

// Joint cluster-assignment distribution of two paired prediction batches.
struct JointDistribution {
  std::size_t k = 0;
  std::vector<double> p;             // k x k, row-major, symmetric
  std::vector<double> marginal_row;  // sum over columns
  std::vector<double> marginal_col;  // sum over rows

  double operator()(std::size_t c, std::size_t c2) const { return p[c * k + c2]; }
};

struct LossWeights {
  double lambda_s = 1.0;
  double lambda_u = 1.0;

  void validate() const;
};

JointDistribution joint_distribution(const nd::Tensor& z1, const nd::Tensor& z2);

// sum_cc' P ln(P / (P_c P_c')), with 0 ln 0 = 0 via the shared log clamp.
double mutual_information(const JointDistribution& joint, double eps = nd::kDefaultLogEps);

// Differentiable negative mutual information of the batch joint distribution.
nd::Tensor mi_loss(const nd::Tensor& z1, const nd::Tensor& z2, double eps = nd::kDefaultLogEps);

// Mean over rows of -ln Z[i, y_i].
nd::Tensor cross_entropy(const nd::Tensor& z, std::span<const int> labels, double eps = nd::kDefaultLogEps);

// Mean over rows of -sum_c p(c) ln(1 - q(c)). 1 - q is not renormalized.
nd::Tensor ce_inverse_pair(const nd::Tensor& p, const nd::Tensor& q, double eps = nd::kDefaultLogEps);

// 0.5 CE^-1(z1, z3) + 0.5 CE^-1(z2, z3).
nd::Tensor ce_inverse_triplet(const nd::Tensor& z1, const nd::Tensor& z2, const nd::Tensor& z3,
                              double eps = nd::kDefaultLogEps);

nd::Tensor combined_loss(const nd::Tensor& supervised, const nd::Tensor& unsupervised, const LossWeights& w);

}  // namespace foc
