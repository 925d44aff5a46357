#include "crossglg/errors.hpp"
#include "crossglg/model.hpp"
#include "crossglg/training.hpp"
#include "test_common.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace crossglg;
using crossglg::test::make_bundle;
using crossglg::test::random_mat;
using crossglg::test::small_config;

namespace {

struct SmallSetup {
  crossglg::test::SyntheticBundle bundle;
  ModelConfig config;
  TrainingSet set;
};

SmallSetup small_setup(int classes = 3, int per_class = 4) {
  SyntheticSpec spec;
  spec.n_classes = classes;
  spec.samples_per_class = per_class;
  spec.frames = 8;
  SmallSetup s;
  s.config = small_config(classes);
  s.bundle = make_bundle(spec, 5, s.config.interaction.text_dim);
  s.set = make_training_set(s.bundle.data, s.bundle.topology, s.config, s.bundle.keys, s.bundle.text);
  return s;
}

}  // namespace

TEST(Losses, Calibrate) {
  const Vec a = (Vec(2) << 1.0, 0.0).finished();
  const Vec b = (Vec(2) << 0.5, 0.5).finished();
  EXPECT_DOUBLE_EQ(loss_calibrate(a, b), 0.25);
  EXPECT_EQ(loss_calibrate(b, b), 0.0);
  EXPECT_EQ(loss_calibrate(Vec::Constant(5, 0.2), Vec::Constant(5, 0.2)), 0.0);
  EXPECT_THROW(loss_calibrate(a, Vec::Zero(3)), std::invalid_argument);
}

TEST(Losses, CalibrateZeroOnlyAtEquality) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec p = softmax(crossglg::test::random_vec(6, rng));
    const Vec q = softmax(crossglg::test::random_vec(6, rng));
    EXPECT_EQ(loss_calibrate(p, p), 0.0);
    EXPECT_GT(loss_calibrate(p, q), 0.0);
  }
}

TEST(Losses, CrossEntropy) {
  Vec y = Vec::Zero(4);
  y[2] = 1.0;
  EXPECT_EQ(loss_ce(y, 2), 0.0);
  EXPECT_NEAR(loss_ce(Vec::Constant(5, 0.2), 1), std::log(5.0), 1e-12);
  Vec p(2);
  p << 0.1, 0.9;
  EXPECT_NEAR(loss_ce(p, 0), 2.302585092994046, 1e-9);
  EXPECT_THROW(loss_ce(p, 2), std::invalid_argument);
  const Vec logits = (Vec(3) << 2.0, -1.0, 0.5).finished();
  EXPECT_NEAR(loss_ce_logits(logits, 1), loss_ce(softmax(logits), 1), 1e-12);
}

TEST(Losses, Overall) {
  EXPECT_DOUBLE_EQ(loss_overall(1, 2, 3, 0.5, 0.2).l_overall, 2.6);
  EXPECT_DOUBLE_EQ(loss_overall(1, 2, 3).l_overall, 2.6);
  EXPECT_EQ(loss_overall(1.5, 2, 3, 0, 0).l_overall, 1.5);
  const ModelConfig c;
  EXPECT_EQ(c.alpha1, 0.5);
  EXPECT_EQ(c.alpha2, 0.2);
}

TEST(Model, ClassifierIsShared) {
  const CrossGlgModel m(tiny_config());
  Rng rng(1);
  const Mat f = random_mat(1, m.config().encoder.post_dim, rng);
  const Vec p = m.classify(f);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_EQ(m.classify(f), p);

  auto params = m.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.name(i).rfind("classifier", 0) == 0) params[i].setZero();
  }
  CrossGlgModel zeroed(tiny_config());
  zeroed.load_params(params);
  const Vec u = zeroed.classify(f);
  for (Eigen::Index i = 0; i < u.size(); ++i) EXPECT_DOUBLE_EQ(u[i], 1.0 / double(u.size()));
}

TEST(Model, LoadParamsChecksLayout) {
  CrossGlgModel m(tiny_config());
  ParamSet wrong;
  wrong.add("x", Mat::Zero(1, 1));
  EXPECT_THROW(m.load_params(wrong), ConfigError);
}

TEST(Model, ForwardBreakdownDecomposes) {
  auto s = small_setup();
  const CrossGlgModel m(s.config);
  for (std::size_t i = 0; i < s.set.size(); ++i) {
    const int y = s.set.targets[i];
    const auto l = m.forward(s.set.frames[i], y, s.set.k_gt[std::size_t(y)], &s.set.text[std::size_t(y)]);
    EXPECT_NEAR(l.l_overall, l.l_s + l.alpha1 * l.l_calibrate + l.alpha2 * l.l_c, 1e-12);
  }
}

TEST(GradientCheck, TinyConfigAllTensors) {
  const auto report = check_gradients(tiny_config(), 0);
  ASSERT_FALSE(report.tensors.empty());
  for (const auto& t : report.tensors) EXPECT_LT(t.max_rel_error, 1e-4) << t.name;
  EXPECT_LT(report.seconds, 60.0);
}

TEST(GradientCheck, AlphaZeroGuidanceGradientsExactlyZero) {
  auto c = tiny_config();
  c.alpha1 = 0.0;
  c.alpha2 = 0.0;
  const auto report = check_gradients(c, 1);
  int guidance = 0;
  for (const auto& t : report.tensors) {
    if (t.name.rfind("guidance.", 0) == 0) {
      ++guidance;
      EXPECT_TRUE(t.exact_zero) << t.name;
    }
    EXPECT_LT(t.max_rel_error, 1e-4) << t.name;
  }
  EXPECT_GT(guidance, 0);
}

TEST(GradientCheck, ReportDeterministic) {
  const auto a = to_json(check_gradients(tiny_config(), 2));
  auto b = to_json(check_gradients(tiny_config(), 2));
  auto strip = [](nlohmann::json j) {
    j.erase("seconds");
    return j;
  };
  EXPECT_EQ(strip(a), strip(b));
}

TEST(Training, LossDecreasesOnSeparableSet) {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.samples_per_class = 8;
  spec.frames = 8;
  auto c = small_config(2);
  c.batch = 16;
  c.epochs = 50;
  auto b = make_bundle(spec, 1, c.interaction.text_dim);
  const auto set = make_training_set(b.data, b.topology, c, b.keys, b.text);
  const auto ck = train(c, set);
  ASSERT_EQ(ck.meta.steps.size(), 50u);
  for (const auto& s : ck.meta.steps) EXPECT_TRUE(std::isfinite(s.losses.l_overall));
  EXPECT_LT(ck.meta.steps.back().losses.l_overall, ck.meta.steps.front().losses.l_overall);
}

TEST(Training, StepLogsDecompose) {
  auto s = small_setup();
  const auto ck = train(s.config, s.set);
  for (const auto& st : ck.meta.steps) {
    const auto& l = st.losses;
    EXPECT_NEAR(l.l_overall, l.l_s + l.alpha1 * l.l_calibrate + l.alpha2 * l.l_c, 1e-9);
  }
}

TEST(Training, SameSeedSameStream) {
  auto s = small_setup();
  const auto a = train(s.config, s.set);
  const auto b = train(s.config, s.set);
  ASSERT_EQ(a.meta.steps.size(), b.meta.steps.size());
  for (std::size_t i = 0; i < a.meta.steps.size(); ++i) {
    EXPECT_NEAR(a.meta.steps[i].losses.l_overall, b.meta.steps[i].losses.l_overall, 1e-6);
  }
  EXPECT_EQ(a.params.max_abs_difference(b.params), 0.0);
}

TEST(Training, ThreadCountDoesNotMatter) {
  auto s = small_setup();
  auto c2 = s.config;
  c2.threads = 3;
  const auto a = train(s.config, s.set);
  const auto b = train(c2, s.set);
  EXPECT_EQ(a.params.max_abs_difference(b.params), 0.0);
}

TEST(Training, ZeroEpochsIsInitialization) {
  auto s = small_setup();
  s.config.epochs = 0;
  const auto ck = train(s.config, s.set);
  EXPECT_TRUE(ck.meta.frozen);
  const CrossGlgModel init(s.config);
  EXPECT_EQ(ck.params.max_abs_difference(init.params()), 0.0);
}

TEST(Training, ResumeMatchesStraightRun) {
  auto s = small_setup();
  s.config.epochs = 3;
  const auto straight = train(s.config, s.set);
  TrainOptions stop;
  stop.stop_after_epoch = 1;
  auto partial = train(s.config, s.set, stop);
  EXPECT_FALSE(partial.meta.frozen);
  crossglg::test::TempDir dir("resume");
  save_checkpoint(partial, dir.path());
  auto resumed = load_checkpoint(dir.path());
  continue_training(resumed, s.set);
  EXPECT_TRUE(resumed.meta.frozen);
  EXPECT_EQ(resumed.params.max_abs_difference(straight.params), 0.0);
  EXPECT_THROW(continue_training(resumed, s.set), ConfigError);
}

TEST(Training, TogglesChangeCheckpoint) {
  auto s = small_setup();
  const auto full = train(s.config, s.set);
  auto off = s.config;
  off.g2l = false;
  off.l2g = false;
  const auto base = train(off, s.set);
  EXPECT_GT(full.params.max_abs_difference(base.params), 0.0);
  EXPECT_EQ(base.meta.steps.front().losses.alpha1, 0.0);
  EXPECT_EQ(base.meta.steps.front().losses.alpha2, 0.0);
}

TEST(Checkpoint, RoundTripExact) {
  auto s = small_setup();
  const auto ck = train(s.config, s.set);
  crossglg::test::TempDir dir("ck");
  save_checkpoint(ck, dir.path());
  const auto back = load_checkpoint(dir.path());
  EXPECT_EQ(back.params.max_abs_difference(ck.params), 0.0);
  EXPECT_EQ(back.class_labels, ck.class_labels);
  EXPECT_EQ(back.meta.epoch, ck.meta.epoch);
  EXPECT_EQ(back.meta.frozen, ck.meta.frozen);
  const auto m1 = model_from_checkpoint(ck), m2 = model_from_checkpoint(back);
  EXPECT_EQ(m1.extract_feature(s.set.frames[0]), m2.extract_feature(s.set.frames[0]));
}

TEST(TrainingSet, MissingDescriptionRejected) {
  auto s = small_setup();
  auto keys = s.bundle.keys;
  keys.erase(keys.begin());
  EXPECT_THROW(make_training_set(s.bundle.data, s.bundle.topology, s.config, keys, s.bundle.text), DataError);
}

TEST(LearningRate, CosineSchedule) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.1, 0, 100), 0.1);
  EXPECT_NEAR(cosine_lr(0.1, 50, 100), 0.05, 1e-15);
  EXPECT_NEAR(cosine_lr(0.1, 100, 100), 0.0, 1e-15);
}

TEST(Config, JsonRoundTripAndValidation) {
  const auto c = full_config();
  nlohmann::json j = c;
  ModelConfig back;
  from_json(j, back);
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(c.encoder.blocks, 9);
  EXPECT_EQ(c.encoder.pre_blocks, 5);
  auto bad = tiny_config();
  bad.batch = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}
