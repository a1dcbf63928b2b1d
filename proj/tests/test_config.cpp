#include <gtest/gtest.h>

#include "foc/config.hpp"

using namespace foc;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_run_config_string(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "accepted:\n" << text;
  return {};
}

}  // namespace

TEST(Config, Defaults) {
  const RunConfig c = parse_run_config_string("");
  EXPECT_EQ(c.train.stage, Stage::warmup_single_stage);
  EXPECT_EQ(c.train.epochs, 500u);
  EXPECT_EQ(c.model.k_over, 10u);
  EXPECT_EQ(c.model.head_copies, 5u);
  EXPECT_EQ(c.train.sampler.repeats, 3u);
  EXPECT_DOUBLE_EQ(c.train.lr, 1e-4);
  EXPECT_EQ(c.generator.components.size(), 3u);
}

TEST(Config, ParsesSectionsAndComments) {
  const RunConfig c = parse_run_config_string(
      "# run\n"
      "seed = 42\n"
      "[train]\n"
      "stage = finetune ; inline\n"
      "epochs = 7\n"
      "lambda_s = 0.5\n"
      "supervised_aug = false\n"
      "[model]\n"
      "hidden_dims = 8, 4\n"
      "k_over = 12\n"
      "[sampler]\n"
      "ratio = 0.25\n"
      "[eval]\n"
      "exclude_components = 2\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.train.stage, Stage::finetune);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_DOUBLE_EQ(c.train.weights.lambda_s, 0.5);
  EXPECT_FALSE(c.train.supervised_aug);
  EXPECT_EQ(c.model.hidden_dims, (std::vector<std::size_t>{8, 4}));
  EXPECT_EQ(c.model.k_over, 12u);
  EXPECT_DOUBLE_EQ(c.train.sampler.ratio, 0.25);
  EXPECT_EQ(c.exclude_components, (std::vector<int>{2}));
}

TEST(Config, GeneratorComponents) {
  const RunConfig c = parse_run_config_string(
      "[gen]\n"
      "components = 2\n"
      "component.0.mean = -1, 0\n"
      "component.0.count = 10\n"
      "component.0.annotation = 1, 0\n"
      "component.1.mean = 1, 0\n"
      "component.1.count = 12\n"
      "component.1.scale = 0.25\n"
      "component.1.annotation = 0, 1\n");
  ASSERT_EQ(c.generator.components.size(), 2u);
  EXPECT_EQ(c.generator.components[1].count, 12u);
  EXPECT_DOUBLE_EQ(c.generator.components[1].scale, 0.25);
  EXPECT_EQ(c.generator.components[0].mean, (std::vector<double>{-1, 0}));
}

TEST(Config, Errors) {
  EXPECT_NE(config_error("seed = 1\nbogus = 2\n").find("line 2"), std::string::npos);
  EXPECT_NE(config_error("seed = 1\nseed = 2\n").find("line 2"), std::string::npos);
  config_error("[train]\nepochs = -3\n");
  config_error("[train]\nstage = sideways\n");
  config_error("no equals sign\n");
  config_error("[model]\nk_over = 2\n");
  config_error("[sampler]\nratio = 1.5\n");
  config_error("[train]\nlambda_s = 0\nlambda_u = 0\n");
}

TEST(Config, DumpRoundTrips) {
  RunConfig c = parse_run_config_string("seed = 3\n[train]\nlr = 0.00025\n[augment]\nnoise_sigma = 0.1\n");
  const RunConfig back = parse_run_config_string(c.dump());
  EXPECT_EQ(back.dump(), c.dump());
  EXPECT_EQ(back.seed, 3u);
  EXPECT_DOUBLE_EQ(back.train.lr, 0.00025);
  EXPECT_EQ(parse_run_config_string(default_config_text()).dump(), parse_run_config_string("").dump());
}
