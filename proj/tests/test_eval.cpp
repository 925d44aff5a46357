#include "crossglg/errors.hpp"
#include "crossglg/eval.hpp"
#include "test_common.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace crossglg;
using crossglg::test::random_vec;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

// Cosine nearest support, lowest index on ties.
std::vector<int> prototype_oracle(const std::vector<Vec>& support, const std::vector<int>& classes,
                                  const std::vector<Vec>& queries) {
  std::vector<int> out;
  for (const auto& q : queries) {
    int best = 0;
    double best_score = -1e300;
    for (std::size_t c = 0; c < support.size(); ++c) {
      double dot = 0.0, nq = 0.0, ns = 0.0;
      for (Eigen::Index i = 0; i < q.size(); ++i) {
        dot += q[i] * support[c][i];
        nq += q[i] * q[i];
        ns += support[c][i] * support[c][i];
      }
      const double score = dot / std::sqrt(nq * ns);
      if (score > best_score) {
        best_score = score;
        best = int(c);
      }
    }
    out.push_back(classes[std::size_t(best)]);
  }
  return out;
}

BaseStatistics toy_stats() {
  std::vector<Vec> feats = {v2(0, 0), v2(2, 0), v2(1, 1), v2(10, 10), v2(12, 10), v2(11, 13)};
  std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  return compute_base_statistics(feats, labels);
}

}  // namespace

TEST(Tukey, Identity) {
  Rng rng(1);
  const Vec v = random_vec(8, rng).cwiseAbs();
  EXPECT_EQ(tukey_transform(v, 1.0), v);
}

TEST(Tukey, SquareRoot) {
  const Vec out = tukey_transform(v2(4, 9), 0.5);
  EXPECT_DOUBLE_EQ(out[0], 2.0);
  EXPECT_DOUBLE_EQ(out[1], 3.0);
}

TEST(Tukey, LogBranch) {
  Vec v(1);
  v[0] = std::exp(1.0) - 1e-6;
  EXPECT_NEAR(tukey_transform(v, 0.0)[0], 1.0, 1e-9);
}

TEST(Shift, NonNegativeAfterShift) {
  const auto shift = fit_shift({v2(-1, 3), v2(2, -4)});
  EXPECT_EQ(shift.minimum, -4.0);
  EXPECT_GE(shift.apply(v2(-10, 0)).minCoeff(), 0.0);
  EXPECT_EQ(shift.apply(v2(0, 0)), v2(4, 4));
}

TEST(BaseStats, MeanAndUnbiasedCovariance) {
  const auto s = toy_stats();
  ASSERT_EQ(s.labels, (std::vector<int>{0, 1}));
  EXPECT_LE((s.means[0] - v2(1, 1.0 / 3.0)).cwiseAbs().maxCoeff(), 1e-15);
  // x: 0,2,1 -> var 1; y: 0,0,1 -> var 1/3; cov(x,y) = 0
  EXPECT_NEAR(s.covariances[0](0, 0), 1.0, 1e-15);
  EXPECT_NEAR(s.covariances[0](1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.covariances[0](0, 1), 0.0, 1e-15);
  const auto d = compute_base_statistics({v2(0, 0), v2(2, 2)}, {0, 0}, true);
  EXPECT_EQ(d.covariances[0](0, 1), 0.0);
}

TEST(Calibrate, SingleNeighbourOracle) {
  const auto s = toy_stats();
  const Vec x = v2(3, 2);
  const auto cal = dc_calibrate(x, s, 1, 0.0);
  ASSERT_EQ(cal.selected, std::vector<std::size_t>{0});
  const Vec expect = (s.means[0] + x) / 2.0;
  EXPECT_EQ(cal.mean, expect);
  EXPECT_EQ(cal.covariance, s.covariances[0]);
}

TEST(Calibrate, RidgeAddsToDiagonal) {
  const auto s = toy_stats();
  const auto a = dc_calibrate(v2(3, 2), s, 2, 0.0);
  const auto b = dc_calibrate(v2(3, 2), s, 2, 0.21);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(b.covariance(i, i) - a.covariance(i, i), 0.21, 1e-15);
  EXPECT_EQ(b.covariance(0, 1), a.covariance(0, 1));
  EXPECT_NEAR(a.covariance(0, 0), (s.covariances[0](0, 0) + s.covariances[1](0, 0)) / 2.0, 1e-15);
}

TEST(Calibrate, SupportAtBaseMeanSelectsIt) {
  const auto s = toy_stats();
  const auto cal = dc_calibrate(s.means[1], s, 1, 0.1);
  EXPECT_EQ(cal.selected.front(), 1u);
}

TEST(Dc, NoSamplesMatchesPrototypeOracle) {
  // Three well-separated directions; queries are noisy copies.
  const std::vector<Vec> support = {(Vec(3) << 5, 0.2, 0.1).finished(), (Vec(3) << 0.1, 4, 0.3).finished(),
                                    (Vec(3) << 0.2, 0.1, 6).finished()};
  const std::vector<int> classes = {7, 8, 9};
  Rng rng(3);
  std::vector<Vec> queries;
  for (int i = 0; i < 30; ++i) queries.push_back(support[std::size_t(i % 3)] + 0.3 * random_vec(3, rng).cwiseAbs());
  const auto stats = compute_base_statistics({random_vec(3, rng).cwiseAbs(), random_vec(3, rng).cwiseAbs()}, {0, 1});
  DcOptions opts;
  opts.n_samples = 0;
  const auto dc = dc_classify(support, classes, queries, stats, opts, 0);
  EXPECT_EQ(dc, prototype_oracle(support, classes, queries));
  EXPECT_EQ(prototype_classify(support, classes, queries), prototype_oracle(support, classes, queries));
}

TEST(Dc, DeterministicAndInLabelSet) {
  const auto s = toy_stats();
  const std::vector<Vec> support = {v2(1, 2), v2(9, 9)};
  const std::vector<int> classes = {4, 6};
  Rng rng(4);
  std::vector<Vec> queries;
  for (int i = 0; i < 20; ++i) queries.push_back(random_vec(2, rng).cwiseAbs() * 5.0);
  DcOptions opts;
  const auto a = dc_classify(support, classes, queries, s, opts, 11);
  EXPECT_EQ(a, dc_classify(support, classes, queries, s, opts, 11));
  for (int p : a) EXPECT_TRUE(p == 4 || p == 6);
}

TEST(Logistic, SeparatesAndBreaksTiesLow) {
  const auto m = fit_logistic({v2(1, 0), v2(0, 1)}, {0, 1}, 2, 200, 0.1, 0.9);
  EXPECT_EQ(m.predict(v2(2, 0)), 0);
  EXPECT_EQ(m.predict(v2(0, 2)), 1);
  const auto zero = fit_logistic({v2(1, 0)}, {0}, 2, 0, 0.1, 0.9);
  EXPECT_EQ(zero.predict(v2(3, 3)), 0);
}

TEST(Prototype, Basics) {
  const std::vector<Vec> support = {v2(1, 0), v2(0, 1)};
  const std::vector<int> classes = {3, 5};
  EXPECT_EQ(prototype_classify(support, classes, {v2(0, 1)}), std::vector<int>{5});
  EXPECT_EQ(prototype_classify(support, classes, {v2(1, 0) + 0.1 * v2(0, 1)}), std::vector<int>{3});
  Rng rng(5);
  std::vector<Vec> qs, scaled_q;
  for (int i = 0; i < 20; ++i) {
    qs.push_back(random_vec(2, rng));
    scaled_q.push_back(3.0 * qs.back());
  }
  EXPECT_EQ(prototype_classify({3.0 * support[0], 3.0 * support[1]}, classes, scaled_q),
            prototype_classify(support, classes, qs));
}

TEST(Prototype, ZeroNormFallsBackToDistance) {
  const std::vector<Vec> support = {v2(0, 0), v2(5, 5)};
  EXPECT_EQ(prototype_classify(support, {0, 1}, {v2(0.1, 0.1)}), std::vector<int>{0});
  EXPECT_EQ(prototype_classify(support, {0, 1}, {v2(4, 4)}), std::vector<int>{1});
}

TEST(Episode, CountsAndStability) {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) {
    for (int m = 0; m < 6; ++m) labels.push_back(10 + c);
  }
  const auto e = sample_episode(labels, 42);
  EXPECT_EQ(e.classes, (std::vector<int>{10, 11, 12, 13}));
  EXPECT_EQ(e.query.size(), 4u * 5u);
  std::set<std::size_t> s(e.support.begin(), e.support.end());
  for (std::size_t q : e.query) EXPECT_FALSE(s.count(q));
  for (std::size_t i = 0; i < e.support.size(); ++i) EXPECT_EQ(labels[e.support[i]], e.classes[i]);
  const auto again = sample_episode(labels, 42);
  EXPECT_EQ(again.support, e.support);
  EXPECT_EQ(again.query, e.query);
  EXPECT_THROW(sample_episode({1, 1, 2}, 0), DataError);
}

TEST(Report, PerfectEpisodeAndMeanOfEpisodes) {
  FeatureSet base, novel;
  Rng rng(6);
  for (int c = 0; c < 3; ++c) {
    for (int m = 0; m < 4; ++m) {
      Vec f = Vec::Zero(3);
      f[c] = 1.0;
      novel.ids.push_back("n" + std::to_string(c * 4 + m));
      novel.labels.push_back(100 + c);
      novel.features.push_back(f);
      base.ids.push_back("b");
      base.labels.push_back(c);
      base.features.push_back(random_vec(3, rng).cwiseAbs());
    }
  }
  EvalOptions opts;
  opts.classifier = ClassifierKind::prototype;
  opts.episodes = 1;
  EXPECT_EQ(evaluate_features(base, novel, opts).accuracy, 1.0);

  for (auto& f : novel.features) f += 0.8 * random_vec(3, rng).cwiseAbs();
  opts.episodes = 5;
  for (auto kind : {ClassifierKind::prototype, ClassifierKind::dc}) {
    opts.classifier = kind;
    const auto r = evaluate_features(base, novel, opts);
    double mean = 0.0;
    for (double a : r.episode_accuracy) mean += a;
    EXPECT_NEAR(r.accuracy, mean / double(r.episode_accuracy.size()), 1e-12);
    EXPECT_EQ(to_json(r), to_json(evaluate_features(base, novel, opts)));
    EXPECT_EQ(r.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  }
}

TEST(Options, Validation) {
  DcOptions o;
  o.k = 0;
  EXPECT_THROW(o.validate(), ConfigError);
  EXPECT_EQ(parse_classifier("prototype"), ClassifierKind::prototype);
  EXPECT_THROW(parse_classifier("svm"), ConfigError);
}

TEST(Features, FrozenOnlyAndOnePerSample) {
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.samples_per_class = 3;
  spec.frames = 8;
  auto c = crossglg::test::small_config(3);
  auto b = crossglg::test::make_bundle(spec, 2, c.interaction.text_dim);
  const auto set = make_training_set(b.data, b.topology, c, b.keys, b.text);
  TrainOptions stop;
  stop.stop_after_epoch = 1;
  const auto partial = train(c, set, stop);
  EXPECT_THROW(extract_features(partial, b.data, b.topology), ConfigError);
  const auto ck = train(c, set);
  const auto f = extract_features(ck, b.data, b.topology);
  EXPECT_EQ(f.size(), b.data.size());
  const auto g = extract_features(ck, b.data, b.topology);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f.features[i], g.features[i]);
}
