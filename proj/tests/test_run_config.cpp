#include <gtest/gtest.h>

#include "gazeattn/error.hpp"
#include "gazeattn/run_config.hpp"

using namespace gazeattn;

TEST(RunConfig, DefaultsMatchTrainingRecipe) {
  const RunConfig c;
  EXPECT_EQ(get_config_value(c, "batch_size"), "12");
  EXPECT_EQ(get_config_value(c, "lr0"), "0.1");
  EXPECT_EQ(get_config_value(c, "weight_decay"), "7e-07");
  EXPECT_EQ(get_config_value(c, "lr_decay_at_iter"), "1000");
  EXPECT_EQ(get_config_value(c, "total_iters"), "10000");
  EXPECT_EQ(get_config_value(c, "dropout"), "0.5");
  EXPECT_EQ(get_config_value(c, "stage_channels"), "16,32,64");
}

TEST(RunConfig, FormatThenParseIsLossless) {
  RunConfig c;
  set_config_value(c, "lr0", "0.0123456789012345");
  set_config_value(c, "stage_channels", "8,12");
  set_config_value(c, "stage_spatial_strides", "1,2");
  set_config_value(c, "attention_scope", "per_timestamp");
  set_config_value(c, "fold", "all");
  const std::string text = format_run_config(c);
  RunConfig d;
  apply_config_text(d, text);
  EXPECT_EQ(format_run_config(d), text);
  EXPECT_EQ(d.train.lr0, 0.0123456789012345);
  EXPECT_EQ(d.model.stages.size(), 2u);
  EXPECT_EQ(d.model.stages[1].stride, (Triple{1, 2, 2}));
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(set_config_value(c, "learning_rate", "0.1"), ConfigError);
  EXPECT_THROW(set_config_value(c, "batch_size", "twelve"), ConfigError);
  EXPECT_THROW(set_config_value(c, "batch_size", "12x"), ConfigError);
  EXPECT_THROW(set_config_value(c, "stem_kernel", "3,3"), ConfigError);
  EXPECT_THROW(set_config_value(c, "fold_mode", "loose"), ConfigError);
}

TEST(RunConfig, ResolveTakesGeometryFromDataUnlessExplicit) {
  DatasetInfo data;
  data.width = data.height = 32;
  data.classes = 3;
  RunConfig c;
  c.resolve(data);
  EXPECT_EQ(c.model.width, 32);
  EXPECT_EQ(c.model.num_classes, 3);

  RunConfig e;
  set_config_value(e, "width", "64");
  EXPECT_THROW(e.resolve(data), ConfigError);
}
