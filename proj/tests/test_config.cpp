#include <gtest/gtest.h>

#include "tmm/config.hpp"
#include "tmm/errors.hpp"

using namespace tmm;

TEST(Config, ParsesSections) {
  const auto c = config::parse_config(
      "[spec]\nn = 120\nclass_effect = 2.5\nmodality_scale = 1, 0.5\n"
      "[train]\nepochs = 40\nlearning_rate = 0.003\nseed = 9\n"
      "[model]\nconfidence = tcp\nuse_trri = false\nlambda_r = 0.4\n");
  EXPECT_EQ(c.spec.n, 120u);
  EXPECT_DOUBLE_EQ(c.spec.class_effect, 2.5);
  EXPECT_EQ(c.spec.modality_scale, (std::vector<double>{1.0, 0.5}));
  EXPECT_EQ(c.train.epochs, 40u);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.003);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.model.confidence, confidence::Mode::kTcp);
  EXPECT_FALSE(c.model.use_trri);
  EXPECT_DOUBLE_EQ(c.model.lambda_r, 0.4);
  // Untouched keys keep their defaults.
  EXPECT_EQ(c.spec.d, data::SyntheticSpec{}.d);
}

TEST(Config, EmptyTextGivesDefaults) {
  const auto c = config::parse_config("");
  EXPECT_EQ(c.spec.n, 400u);
  EXPECT_EQ(c.train.epochs, train::TrainConfig{}.epochs);
  EXPECT_EQ(c.model.confidence, confidence::Mode::kTfcp);
}

TEST(Config, TextRoundTrip) {
  config::RunConfig c;
  c.spec.class_effect = 0.1 + 0.2;
  c.spec.modality_scale = {1.0, 1.0 / 3.0};
  c.spec.class_sizes = {150, 250};
  c.train.weight_decay = 1e-5;
  c.model.use_rri = false;
  c.model.confidence = confidence::Mode::kNn;
  c.model.lambda_t = 0.35;
  const std::string text = config::to_text(c);
  const auto back = config::parse_config(text);
  EXPECT_EQ(config::to_text(back), text);
  EXPECT_EQ(back.spec.class_effect, c.spec.class_effect);
  EXPECT_EQ(back.spec.modality_scale, c.spec.modality_scale);
  EXPECT_EQ(back.spec.class_sizes, c.spec.class_sizes);
  EXPECT_EQ(back.train.weight_decay, c.train.weight_decay);
  EXPECT_FALSE(back.model.use_rri);
  EXPECT_EQ(back.model.confidence, confidence::Mode::kNn);
  EXPECT_EQ(back.model.lambda_t, 0.35);
}

TEST(Config, Rejections) {
  EXPECT_THROW(config::parse_config("[spec]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(config::parse_config("[extra]\nn = 1\n"), ConfigError);
  EXPECT_THROW(config::parse_config("[spec]\nn = ten\n"), ConfigError);
  EXPECT_THROW(config::parse_config("[spec]\nn = -3\n"), ConfigError);
  EXPECT_THROW(config::parse_config("[model]\nuse_rri = maybe\n"), ConfigError);
  EXPECT_THROW(config::parse_config("[model]\nconfidence = mcp\n"), ConfigError);
  EXPECT_THROW(config::parse_config("n = 3\n"), ConfigError);
}

TEST(Config, MissingFile) {
  EXPECT_THROW(config::load_config("/nonexistent/run.ini"), IoError);
}
