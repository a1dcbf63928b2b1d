#include <gtest/gtest.h>

#include "foc/model.hpp"
#include "test_util.hpp"

using namespace foc;
using foc::nd::Tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.input_dim = 2;
  c.hidden_dims = {16};
  c.k_gt = 2;
  c.k_over = 6;
  c.head_copies = 5;
  return c;
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.values().begin(), p.values().end());
  return out;
}

}  // namespace

TEST(Model, InitShapes) {
  const auto m = init_model(small_config(), 7);
  EXPECT_EQ(m.normal_heads.size(), 5u);
  EXPECT_EQ(m.over_heads.size(), 5u);
  EXPECT_EQ(m.backbone.size(), 1u);
  EXPECT_EQ(m.feature_dim(), 16u);
  EXPECT_EQ(m.normal_heads[0].weight.cols(), 2u);
  EXPECT_EQ(m.over_heads[4].weight.cols(), 6u);
}

TEST(Model, InitIsDeterministic) {
  const auto a = init_model(small_config(), 7);
  const auto b = init_model(small_config(), 7);
  const auto c = init_model(small_config(), 8);
  const auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].first, pb[i].first);
    EXPECT_TRUE(std::equal(pa[i].second.values().begin(), pa[i].second.values().end(),
                           pb[i].second.values().begin()));
    if (!std::equal(pa[i].second.values().begin(), pa[i].second.values().end(), pc[i].second.values().begin())) {
      any_diff = true;
    }
  }
  EXPECT_TRUE(any_diff);
  EXPECT_EQ(backbone_hash(a), backbone_hash(b));
}

TEST(Model, HeadCopiesDiffer) {
  const auto m = init_model(small_config(), 7);
  const auto& w0 = m.over_heads[0].weight;
  const auto& w1 = m.over_heads[1].weight;
  EXPECT_FALSE(std::equal(w0.values().begin(), w0.values().end(), w1.values().begin()));
}

TEST(Model, ConfigValidation) {
  auto c = small_config();
  c.k_over = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(init_model(c, 1), std::invalid_argument);
  c = small_config();
  c.head_copies = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.hidden_dims = {0};
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = small_config();
  c.k_over = 10;
  EXPECT_TRUE(c.overclustering_warning().empty());
  c.k_over = 3;
  EXPECT_FALSE(c.overclustering_warning().empty());
  c.k_over = 40;
  EXPECT_FALSE(c.overclustering_warning().empty());
}

TEST(Model, ForwardRowsAreDistributions) {
  const auto m = init_model(small_config(), 3);
  Rng rng(9);
  const Tensor x = testkit::random_tensor(rng, 25, 2, -5, 5);
  for (HeadType t : {HeadType::normal, HeadType::over}) {
    for (std::size_t h = 0; h < 5; ++h) {
      const Tensor out = forward(m, x, t, h);
      ASSERT_EQ(out.rows(), 25u);
      for (std::size_t i = 0; i < out.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < out.cols(); ++j) s += out(i, j);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
  const Tensor again = forward(m, x, HeadType::over, 2);
  const Tensor first = forward(m, x, HeadType::over, 2);
  EXPECT_TRUE(std::equal(again.values().begin(), again.values().end(), first.values().begin()));
}

TEST(Model, ForwardEdgeCases) {
  const auto m = init_model(small_config(), 3);
  const Tensor none = forward(m, Tensor({0, 2}, {}), HeadType::over, 0);
  EXPECT_EQ(none.rows(), 0u);
  EXPECT_EQ(none.cols(), 6u);
  EXPECT_THROW(forward(m, Tensor({1, 2}, {0, 0}), HeadType::normal, 5), std::out_of_range);
  EXPECT_THROW(forward(m, Tensor({1, 3}, {0, 0, 0}), HeadType::normal, 0), nd::ShapeError);
}

TEST(Model, ArgmaxRows) {
  EXPECT_EQ(argmax_rows(Tensor({1, 3}, {0.2, 0.7, 0.1})), (std::vector<int>{1}));
  EXPECT_EQ(argmax_rows(Tensor({1, 2}, {0.5, 0.5})), (std::vector<int>{0}));
  EXPECT_TRUE(argmax_rows(Tensor({0, 2}, {})).empty());
}

TEST(Model, ResetHeads) {
  auto m = init_model(small_config(), 3);
  const auto backbone = snapshot(m.backbone_parameters());
  const auto normal = snapshot(m.head_parameters(HeadType::normal));

  reset_heads(m, HeadType::over, 99);
  EXPECT_EQ(snapshot(m.backbone_parameters()), backbone);
  EXPECT_EQ(snapshot(m.head_parameters(HeadType::normal)), normal);
  const auto over_a = snapshot(m.head_parameters(HeadType::over));
  reset_heads(m, HeadType::over, 99);
  EXPECT_EQ(snapshot(m.head_parameters(HeadType::over)), over_a);

  const auto over = snapshot(m.head_parameters(HeadType::over));
  reset_heads(m, HeadType::normal, 5);
  EXPECT_EQ(snapshot(m.head_parameters(HeadType::over)), over);
  EXPECT_EQ(snapshot(m.backbone_parameters()), backbone);
}

TEST(Model, CloneIsDeep) {
  auto m = init_model(small_config(), 3);
  auto c = m.clone();
  c.backbone[0].weight.mutable_values()[0] += 1.0;
  EXPECT_NE(m.backbone[0].weight.values()[0], c.backbone[0].weight.values()[0]);
  EXPECT_NE(backbone_hash(m), backbone_hash(c));
}
