#include <gtest/gtest.h>

#include <cmath>

#include "foc/losses.hpp"
#include "foc/model.hpp"
#include "test_util.hpp"

using namespace foc;
using foc::nd::Tensor;

namespace {

const double kLn2 = std::log(2.0);

// Direct evaluation of sum p ln(p / (pc pc')) with 0 ln 0 = 0.
double oracle_mi(const std::vector<double>& p, std::size_t k) {
  std::vector<double> r(k, 0.0), c(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      r[a] += p[a * k + b];
      c[b] += p[a * k + b];
    }
  }
  double mi = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (p[a * k + b] > 0.0) mi += p[a * k + b] * std::log(p[a * k + b] / (r[a] * c[b]));
    }
  }
  return mi;
}

JointDistribution from_matrix(std::vector<double> p, std::size_t k) {
  JointDistribution j;
  j.k = k;
  j.p = std::move(p);
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

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

}  // namespace

TEST(Losses, JointDistribution) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  auto j = joint_distribution(eye, eye);
  EXPECT_EQ(j.p, (std::vector<double>{0.5, 0, 0, 0.5}));

  const Tensor flat({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  j = joint_distribution(flat, flat);
  for (double v : j.p) EXPECT_DOUBLE_EQ(v, 0.25);

  j = joint_distribution(row({1, 0}), row({0, 1}));
  EXPECT_EQ(j.p, (std::vector<double>{0, 0.5, 0.5, 0}));
  EXPECT_EQ(j.marginal_row, (std::vector<double>{0.5, 0.5}));

  EXPECT_THROW(joint_distribution(Tensor({0, 2}, {}), Tensor({0, 2}, {})), nd::ShapeError);
  EXPECT_THROW(joint_distribution(eye, row({1, 0})), nd::ShapeError);
}

TEST(Losses, JointDistributionIsSymmetricDistribution) {
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    const std::size_t k = 2 + rng.index(8);
    const Tensor z1 = testkit::random_distributions(rng, 12, k);
    const Tensor z2 = testkit::random_distributions(rng, 12, k);
    const auto j = joint_distribution(z1, z2);
    double total = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        EXPECT_GE(j(a, b), 0.0);
        EXPECT_EQ(j(a, b), j(b, a));
        total += j(a, b);
      }
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Losses, MutualInformationHandCases) {
  EXPECT_NEAR(mutual_information(from_matrix({0.5, 0, 0, 0.5}, 2)), kLn2, 1e-9);
  EXPECT_NEAR(mutual_information(from_matrix({0.25, 0.25, 0.25, 0.25}, 2)), 0.0, 1e-9);
  EXPECT_NEAR(mutual_information(from_matrix({0, 0.5, 0.5, 0}, 2)), kLn2, 1e-9);
}

TEST(Losses, MutualInformationBoundsAndOracle) {
  Rng rng(2024);
  for (std::size_t k = 2; k <= 10; ++k) {
    for (int t = 0; t < 100; ++t) {
      const Tensor z1 = testkit::random_distributions(rng, 16, k, 3.0);
      const Tensor z2 = testkit::random_distributions(rng, 16, k, 3.0);
      const auto j = joint_distribution(z1, z2);
      const double mi = mutual_information(j);
      EXPECT_GE(mi, -1e-9);
      EXPECT_LE(mi, std::log(static_cast<double>(k)) + 1e-9);
      EXPECT_NEAR(mi, oracle_mi(j.p, k), 1e-9);
      EXPECT_NEAR(-mi_loss(z1, z2).item(), mi, 1e-12);
    }
  }
}

TEST(Losses, MiLossPermutationInvariant) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 4;
    const Tensor z1 = testkit::random_distributions(rng, 10, k);
    const Tensor z2 = testkit::random_distributions(rng, 10, k);
    std::vector<std::size_t> perm = {2, 0, 3, 1};
    auto permute = [&](const Tensor& z) {
      std::vector<double> v(z.size());
      for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < k; ++j) v[i * k + j] = z(i, perm[j]);
      }
      return Tensor(z.shape(), std::move(v));
    };
    EXPECT_NEAR(mi_loss(z1, z2).item(), mi_loss(permute(z1), permute(z2)).item(), 1e-12);
  }
}

TEST(Losses, MiLossValues) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(mi_loss(eye, eye).item(), -kLn2, 1e-12);
  const Tensor flat({2, 2}, {0.5, 0.5, 0.5, 0.5});
  EXPECT_NEAR(mi_loss(flat, flat).item(), 0.0, 1e-12);
}

TEST(Losses, CrossEntropy) {
  const int zero[] = {0};
  const int one[] = {1};
  EXPECT_NEAR(cross_entropy(row({1, 0}), zero).item(), 0.0, 1e-15);
  EXPECT_NEAR(cross_entropy(row({0.25, 0.75}), one).item(), 0.287682072451781, 1e-12);
  EXPECT_NEAR(cross_entropy(row({0.25, 0.75}), zero).item(), 1.386294361119891, 1e-12);
  const int bad[] = {2};
  EXPECT_THROW(cross_entropy(row({0.5, 0.5}), bad), std::out_of_range);
  const int neg[] = {-1};
  EXPECT_THROW(cross_entropy(row({0.5, 0.5}), neg), std::out_of_range);
}

TEST(Losses, InverseCrossEntropyPair) {
  EXPECT_EQ(ce_inverse_pair(row({0.5, 0.5, 0}), row({0, 0, 1})).item(), 0.0);
  EXPECT_NEAR(ce_inverse_pair(row({1, 0, 0}), row({0, 0.5, 0.5})).item(), 0.0, 1e-15);
  EXPECT_NEAR(ce_inverse_pair(row({1, 0}), row({1, 0})).item(), -std::log(1e-12), 1e-9);
  EXPECT_THROW(ce_inverse_pair(row({1, 0}), row({1, 0, 0})), nd::ShapeError);
}

TEST(Losses, InverseCrossEntropyTriplet) {
  const Tensor a = row({1, 0, 0});
  const Tensor c = row({0, 0.5, 0.5});
  EXPECT_NEAR(ce_inverse_triplet(a, a, c).item(), 0.0, 1e-15);
  EXPECT_NEAR(ce_inverse_triplet(row({0, 0, 1}), row({1, 0, 0}), row({0.5, 0.5, 0})).item(), 0.5 * kLn2, 1e-12);
  EXPECT_THROW(ce_inverse_triplet(a, a, row({1, 0})), nd::ShapeError);
}

TEST(Losses, InverseCrossEntropyLinearNonNegative) {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng.index(9);
    const Tensor p1 = testkit::random_distributions(rng, 1, k);
    const Tensor p2 = testkit::random_distributions(rng, 1, k);
    const Tensor q = testkit::random_distributions(rng, 1, k);
    const double a = rng.uniform();
    std::vector<double> mix(k);
    for (std::size_t j = 0; j < k; ++j) mix[j] = a * p1(0, j) + (1 - a) * p2(0, j);
    const double lhs = ce_inverse_pair(row(mix), q).item();
    const double rhs = a * ce_inverse_pair(p1, q).item() + (1 - a) * ce_inverse_pair(p2, q).item();
    EXPECT_NEAR(lhs, rhs, 1e-12);
    EXPECT_GE(ce_inverse_pair(p1, q).item(), 0.0);
  }
}

TEST(Losses, InverseCrossEntropyMinimizerIsVertex) {
  Rng rng(77);
  for (std::size_t k = 2; k <= 10; ++k) {
    for (int t = 0; t < 10; ++t) {
      const Tensor q = testkit::random_distributions(rng, 1, k);
      std::size_t argmin_q = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (q(0, j) < q(0, argmin_q)) argmin_q = j;
      }
      std::size_t best = 0;
      double best_val = INFINITY;
      for (std::size_t v = 0; v < k; ++v) {
        std::vector<double> e(k, 0.0);
        e[v] = 1.0;
        const double val = ce_inverse_pair(row(e), q).item();
        if (val < best_val) {
          best_val = val;
          best = v;
        }
      }
      EXPECT_EQ(best, argmin_q);
      for (int s = 0; s < 20; ++s) {
        EXPECT_GE(ce_inverse_pair(testkit::random_distributions(rng, 1, k), q).item(), best_val - 1e-12);
      }
    }
  }
}

TEST(Losses, InverseCrossEntropyDescentReachesOneHot) {
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    const std::size_t k = 5;
    const Tensor q = testkit::random_distributions(rng, 1, k);
    std::size_t argmin_q = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (q(0, j) < q(0, argmin_q)) argmin_q = j;
    }
    Tensor logits = Tensor::zeros(1, k, true);
    auto adam = nd::AdamState::for_shape(logits.shape());
    double h = INFINITY;
    for (int step = 0; step < 20000 && h >= 0.01; ++step) {
      nd::backward(ce_inverse_pair(nd::softmax_rows(logits), q));
      nd::adam_step(logits, adam, 0.05);
      logits.zero_grad();
      h = testkit::entropy(nd::softmax_rows(logits.detach()).values());
    }
    EXPECT_LT(h, 0.01);
    EXPECT_EQ(static_cast<std::size_t>(argmax_rows(nd::softmax_rows(logits.detach()))[0]), argmin_q);
  }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor z1 = testkit::random_distributions(rng, 8, 5);
    const Tensor z2 = testkit::random_distributions(rng, 8, 5);
    const Tensor z3 = testkit::random_distributions(rng, 8, 5);
    std::vector<int> labels(8);
    for (int& y : labels) y = static_cast<int>(rng.index(5));

    const Tensor pair[] = {z1, z2};
    EXPECT_LT(nd::finite_diff_check([](std::span<const Tensor> in) { return mi_loss(in[0], in[1]); }, pair, 1e-6),
              1e-4);
    EXPECT_LT(nd::finite_diff_check([&](const Tensor& z) { return cross_entropy(z, labels); }, z1, 1e-6), 1e-4);
    const Tensor triple[] = {z1, z2, z3};
    EXPECT_LT(nd::finite_diff_check(
                  [](std::span<const Tensor> in) { return ce_inverse_triplet(in[0], in[1], in[2]); }, triple, 1e-6),
              1e-4);
  }
}

TEST(Losses, CombinedLoss) {
  EXPECT_DOUBLE_EQ(combined_loss(Tensor::scalar(0.3), Tensor::scalar(0.7), {1, 1}).item(), 1.0);
  EXPECT_DOUBLE_EQ(combined_loss(Tensor::scalar(5), Tensor::scalar(9), {1, 0}).item(), 5.0);
  EXPECT_DOUBLE_EQ(combined_loss(Tensor::scalar(0.25), Tensor::scalar(0.5), {2, 1}).item(), 1.0);
  EXPECT_THROW((LossWeights{0, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((LossWeights{-1, 1}.validate()), std::invalid_argument);
}
