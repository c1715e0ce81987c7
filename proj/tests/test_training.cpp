#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gazeattn/error.hpp"
#include "gazeattn/evaluation.hpp"
#include "gazeattn/gaze.hpp"
#include "gazeattn/synth.hpp"
#include "gazeattn/training.hpp"
#include "test_util.hpp"

using namespace gazeattn;
namespace fs = std::filesystem;

namespace {

// A small on-disk synthetic dataset shared by the loop tests.
const DatasetInfo& tiny_dataset() {
  static const DatasetInfo data = [] {
    SynthConfig sc;
    sc.seed = 3;
    sc.num_users = 2;
    sc.trials_per_user = 2;
    sc.height = sc.width = 16;
    sc.classes = 3;
    sc.segments_per_trial = 4;
    sc.min_segment = 6;
    sc.max_segment = 10;
    const fs::path dir = fs::temp_directory_path() / "gazeattn_training_tiny";
    fs::remove_all(dir);
    synth_generate(sc, dir);
    return load_dataset(dir);
  }();
  return data;
}

std::vector<PreparedTrial> tiny_split() {
  return prepare_trials(tiny_dataset(), {0, 1, 2, 3}, 5, 4);
}

TrainConfig tiny_train(int iters) {
  TrainConfig c;
  c.batch_size = 2;
  c.total_iters = iters;
  c.seed = 11;
  c.lr0 = 0.05;
  return c;
}

}  // namespace

TEST(LearningRate, SingleDecay) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(999, c), 0.1);
  EXPECT_NEAR(lr_at(1000, c), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(9999, c), 0.01, 1e-15);
}

TEST(LearningRate, RepeatedDecayWhenStepEverySet) {
  TrainConfig c;
  c.lr_step_every = 1000;
  EXPECT_NEAR(lr_at(1000, c), 0.01, 1e-15);
  EXPECT_NEAR(lr_at(2500, c), 0.001, 1e-15);
  EXPECT_NEAR(lr_at(9999, c), 1e-10, 1e-22);
}

TEST(Sgd, ZeroGradientsLeaveParamsUnchanged) {
  Param<double> p("p", {3});
  p.value = Tensor<double>({3}, {1.0, -2.0, 3.0});
  SgdState<double> state;
  sgd_step<double>({&p}, state, 0.1, 0.9, 0.0);
  EXPECT_EQ(p.value.storage(), (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Sgd, MomentumRecurrence) {
  Param<double> p("p", {1});
  p.value[0] = 1.0;
  p.grad[0] = 1.0;
  SgdState<double> state;
  sgd_step<double>({&p}, state, 0.1, 0.9, 0.0);
  EXPECT_DOUBLE_EQ(p.value[0], 0.9);
  EXPECT_DOUBLE_EQ(state.momentum[0][0], 1.0);
  sgd_step<double>({&p}, state, 0.1, 0.9, 0.0);
  EXPECT_DOUBLE_EQ(state.momentum[0][0], 1.9);
  EXPECT_NEAR(p.value[0], 0.71, 1e-15);
}

TEST(Sgd, ZeroLearningRateIsIdentityAndWeightDecayEntersGradient) {
  Param<double> p("p", {2});
  p.value = Tensor<double>({2}, {1.0, 2.0});
  p.grad = Tensor<double>({2}, {0.5, -0.5});
  SgdState<double> state;
  sgd_step<double>({&p}, state, 0.0, 0.9, 0.1);
  EXPECT_EQ(p.value.storage(), (std::vector<double>{1.0, 2.0}));
  EXPECT_DOUBLE_EQ(state.momentum[0][0], 0.5 + 0.1 * 1.0);
}

TEST(Sgd, NonFiniteGradientAborts) {
  Param<float> p("stage1.conv.weight", {1});
  p.grad[0] = std::numeric_limits<float>::quiet_NaN();
  SgdState<float> state;
  try {
    sgd_step<float>({&p}, state, 0.1f, 0.9f, 0.0f);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("stage1.conv.weight"), std::string::npos);
  }
}

TEST(GradClip, ScalesToMaxNorm) {
  Param<double> p("p", {2});
  p.grad = Tensor<double>({2}, {3.0, 4.0});
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>({&p}, 1.0), 5.0);
  EXPECT_NEAR(p.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(p.grad[1], 0.8, 1e-15);
}

TEST(Loss, UniformLogitsGiveLogK) {
  const std::vector<double> logits(4, 0.3);
  const Tensor<double> a({1, 2, 2}, 0.5), g({1, 2, 2}, 0.25);
  EXPECT_NEAR(total_loss<double>(logits, Gesture::G2, a, g, 0.0), 1.3863, 1e-4);
}

TEST(Loss, VanishesForConfidentCorrectLogitsAndProportionalAttention) {
  const std::vector<double> logits{40.0, 0.0, 0.0, 0.0};
  const Tensor<double> g({1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  Tensor<double> a(g.shape());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 2.5 * g[i];
  EXPECT_LE(total_loss<double>(logits, Gesture::G1, a, g, 1.0), 1e-5);
}

TEST(Loss, LambdaZeroIsCrossEntropyAndMonotoneInLambda) {
  const std::vector<double> logits{0.5, -1.0, 2.0};
  const Tensor<double> a({1, 2, 2}, {0.0, 1.0, 0.2, 0.4}), g({1, 2, 2}, {0.7, 0.1, 0.1, 0.1});
  const double ce = cross_entropy<double>(logits, 2);
  EXPECT_EQ(total_loss<double>(logits, Gesture::G3, a, g, 0.0), ce);
  double prev = ce;
  for (double lambda : {0.5, 1.0, 2.0, 10.0}) {
    const double l = total_loss<double>(logits, Gesture::G3, a, g, lambda);
    EXPECT_GT(l, prev);
    prev = l;
  }
  EXPECT_THROW(total_loss<double>(logits, Gesture::Unlabeled, a, g, 1.0), ValidationError);
}

TEST(Loss, BatchGradientMatchesFiniteDifferences) {
  auto logits = testutil::random_tensor<double>({2, 3}, 1);
  auto a = testutil::random_tensor<double>({2, 1, 2, 2}, 2, 0.05, 1.0);
  const Tensor<double> g({2, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25});
  const std::vector<int> labels{2, 0};
  const std::vector<bool> valid{true, true};
  Tensor<double> dl, da;
  batch_loss<double>(logits, labels, a, g, valid, 0.7, &dl, &da);
  auto f = [&] { return batch_loss<double>(logits, labels, a, g, valid, 0.7, nullptr, nullptr).total; };
  EXPECT_LT(testutil::max_rel_error(dl, testutil::numeric_grad(logits, f)), 1e-6);
  EXPECT_LT(testutil::max_rel_error(da, testutil::numeric_grad(a, f)), 1e-6);
}

TEST(Augment, FlipTwiceRestoresAndNoFlipIsIdentity) {
  Clip clip;
  clip.frames = testutil::random_tensor<float>({2, 4, 6, 3}, 3, 0.0, 1.0);
  clip.gaze = {{1.0, 2.0}, {4.5, 0.0}};
  const Clip original = clip;
  std::mt19937_64 rng(4);
  EXPECT_TRUE(augment(clip, rng, 1.0));
  EXPECT_EQ(clip.gaze[0].x, 4.0);
  EXPECT_EQ(clip.frames[0], original.frames[(5) * 3]);
  EXPECT_TRUE(augment(clip, rng, 1.0));
  EXPECT_EQ(clip.frames, original.frames);
  EXPECT_EQ(clip.gaze, original.gaze);
  EXPECT_FALSE(augment(clip, rng, 0.0));
  EXPECT_EQ(clip.frames, original.frames);
}

TEST(Augment, FlippedHeatmapMirrorsOriginal) {
  Clip clip;
  clip.frames = Tensor<float>({1, 64, 64, 3});
  clip.gaze = {{20.3, 40.0}};
  const auto before = gaze_to_heatmap(clip.gaze[0], 64, 64, 16, 16, 1.5);
  flip_clip(clip);
  const auto after = gaze_to_heatmap(clip.gaze[0], 64, 64, 16, 16, 1.5);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) EXPECT_NEAR(after[std::size_t(i) * 16 + j], before[std::size_t(i) * 16 + 15 - j], 1e-6);
}

TEST(TrainLoop, ThreeIterationsGiveThreeRows) {
  const fs::path dir = fs::temp_directory_path() / "gazeattn_train_three";
  fs::remove_all(dir);
  const auto result = train(tiny_split(), tiny_train(3), testutil::tiny_backbone(), {dir, "cfg\n"});
  EXPECT_EQ(result.log.size(), 3u);
  EXPECT_EQ(result.checkpoint.get_int("meta/iteration"), 3);
  std::ifstream log(dir / "train_log.jsonl");
  int rows = 0;
  for (std::string line; std::getline(log, line);) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"iter", "lr", "ce_loss", "attn_loss", "total"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["iter"].get<int>(), rows);
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin.manifest"));
}

TEST(TrainLoop, SameSeedGivesIdenticalCheckpointBytes) {
  const auto split = tiny_split();
  const auto a = train(split, tiny_train(4), testutil::tiny_backbone(), {});
  const auto b = train(split, tiny_train(4), testutil::tiny_backbone(), {});
  EXPECT_EQ(a.checkpoint.serialize(), b.checkpoint.serialize());
  auto other = tiny_train(4);
  other.seed = 12;
  EXPECT_NE(train(split, other, testutil::tiny_backbone(), {}).checkpoint.serialize(), a.checkpoint.serialize());
}

TEST(TrainLoop, LambdaZeroLogsZeroAttentionLoss) {
  auto cfg = tiny_train(3);
  cfg.lambda_attn = 0.0;
  for (const auto& row : train(tiny_split(), cfg, testutil::tiny_backbone(), {}).log) {
    EXPECT_EQ(row.attn_loss, 0.0);
    EXPECT_EQ(row.total, row.ce_loss);
  }
}

TEST(TrainLoop, NonFiniteLossAbortsAndKeepsLastGoodCheckpoint) {
  const fs::path dir = fs::temp_directory_path() / "gazeattn_train_nan";
  fs::remove_all(dir);
  auto cfg = tiny_train(50);
  cfg.lr0 = 1e30;
  EXPECT_THROW(train(tiny_split(), cfg, testutil::tiny_backbone(), {dir, ""}), NumericError);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  EXPECT_NO_THROW(load_checkpoint(dir / "checkpoint.bin"));
}

TEST(TrainLoop, AttentionObjectiveMovesMassTowardGaze) {
  // Heavily weighted attention loss: the gaze term dominates the classifier term.
  const auto split = tiny_split();
  auto cfg = tiny_train(200);
  cfg.lambda_attn = 20.0;
  cfg.lr0 = 0.01;
  cfg.lr_decay_at_iter = 1000;
  const auto model_cfg = testutil::tiny_backbone();
  const auto clips = sample_clips(split, 3);
  const double radius = 2.0 * cfg.heatmap.sigma;

  Backbone<float> init(model_cfg);
  init.init(cfg.seed);
  const double before = attention_gaze_mass(init, clips, radius);

  const auto result = train(split, cfg, model_cfg, {});
  Backbone<float> trained(model_cfg);
  restore_checkpoint<float>(result.checkpoint, trained, nullptr);
  const double after = attention_gaze_mass(trained, clips, radius);
  EXPECT_GT(after, before);
}

TEST(TrainLoop, RejectsLabelsBeyondModelClasses) {
  EXPECT_THROW(train(tiny_split(), tiny_train(1), testutil::tiny_backbone(2), {}), ValidationError);
}

TEST(TrainConfigValidation, RejectsBadValues) {
  TrainConfig c;
  c.flip_prob = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
