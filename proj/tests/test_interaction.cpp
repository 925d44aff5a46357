#include "crossglg/errors.hpp"
#include "crossglg/interaction.hpp"
#include "test_common.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace crossglg;
using crossglg::test::random_mat;

namespace {

InteractionConfig small_interaction(int heads = 2, int blocks = 2) {
  InteractionConfig c;
  c.blocks = blocks;
  c.shared_dim = 8;
  c.heads = heads;
  c.text_dim = 6;
  c.post_dim = 5;
  c.mlp_hidden = 10;
  return c;
}

// Reference arithmetic written element by element, independent of Eigen
// expression code in the library.
double ref_gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (x + 0.044715 * x * x * x)));
}

Mat ref_linear(const Mat& x, const Mat& w, const Mat& b) {
  Mat y(x.rows(), w.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double s = b(0, j);
      for (Eigen::Index k = 0; k < x.cols(); ++k) s += x(i, k) * w(k, j);
      y(i, j) = s;
    }
  }
  return y;
}

Mat ref_attention_single_head(const ParamSet& p, const nn::AttentionRef& r, const Mat& q_in, const Mat& kv_in) {
  const Mat q = ref_linear(q_in, p[r.query.weight], p[r.query.bias]);
  const Mat k = ref_linear(kv_in, p[r.key.weight], p[r.key.bias]);
  const Mat v = ref_linear(kv_in, p[r.value.weight], p[r.value.bias]);
  const double d = double(q.cols());
  Mat ctx = Mat::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> s(std::size_t(k.rows()));
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      s[std::size_t(j)] = dot / std::sqrt(d);
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double& e : s) z += (e = std::exp(e - mx));
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) ctx(i, c) += s[std::size_t(j)] / z * v(j, c);
    }
  }
  return ref_linear(ctx, p[r.output.weight], p[r.output.bias]);
}

Mat ref_mlp(const ParamSet& p, const nn::MlpRef& r, const Mat& x) {
  Mat h = ref_linear(x, p[r.first.weight], p[r.first.bias]);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = ref_gelu(h.data()[i]);
  return ref_linear(h, p[r.second.weight], p[r.second.bias]);
}

}  // namespace

TEST(Interaction, TwoJointSingleHeadOracle) {
  Rng rng(21);
  ParamSet params;
  GuidanceBranch g(small_interaction(1, 1), params, rng);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.name(i).find(".bias") != std::string::npos) params[i] = random_mat(1, params[i].cols(), rng, 0.3);
  }
  const Mat txt = random_mat(2, 8, rng);
  const Mat st = random_mat(2, 8, rng);
  const auto [p_txt, p_st] = g.interaction_block(params, 0, txt, st);

  const auto& r = g.block_refs()[0];
  const Mat e_txt = ref_attention_single_head(params, r.self_attn, txt, txt) + txt;
  const Mat e_cross = ref_attention_single_head(params, r.cross_attn, e_txt, st) + st;
  const Mat e_st = ref_mlp(params, r.fuse, e_txt + e_cross);
  EXPECT_LE((p_txt - e_txt).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((p_st - e_st).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Interaction, SingleJointAttentionIsValueProjection) {
  Rng rng(22);
  ParamSet params;
  auto cfg = small_interaction(2, 1);
  cfg.residual = false;
  GuidanceBranch g(cfg, params, rng);
  const Mat txt = random_mat(1, 8, rng), st = random_mat(1, 8, rng);
  InteractionBlockCache cache;
  g.interaction_block(params, 0, txt, st, &cache);
  for (const auto& p : cache.self_attn.probs) EXPECT_EQ(p(0, 0), 1.0);
  for (const auto& p : cache.cross_attn.probs) EXPECT_EQ(p(0, 0), 1.0);
  const auto& r = g.block_refs()[0];
  const Mat v = ref_linear(txt, params[r.self_attn.value.weight], params[r.self_attn.value.bias]);
  const Mat expect = ref_linear(v, params[r.self_attn.output.weight], params[r.self_attn.output.bias]);
  EXPECT_LE((cache.txt_out - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Interaction, IdenticalSkeletonRowsGiveIdenticalCrossRows) {
  Rng rng(23);
  ParamSet params;
  auto cfg = small_interaction();
  cfg.residual = false;
  GuidanceBranch g(cfg, params, rng);
  const Mat txt = random_mat(4, 8, rng);
  const Mat st = random_mat(1, 8, rng).replicate(4, 1);
  InteractionBlockCache cache;
  g.interaction_block(params, 0, txt, st, &cache);
  const Mat cross = cache.fuse.input - cache.txt_out;
  for (Eigen::Index r = 1; r < 4; ++r) EXPECT_LE((cross.row(r) - cross.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Interaction, ProjectionZeroAndIndependence) {
  Rng rng(24);
  ParamSet params;
  GuidanceBranch g(small_interaction(), params, rng);
  const auto zero = g.project_to_shared(params, Mat::Zero(4, 6), Mat::Zero(4, 5));
  EXPECT_EQ(zero.p_txt.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(zero.p_ske.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(zero.p_txt.cols(), 8);

  const Mat t = random_mat(4, 6, rng), f = random_mat(4, 5, rng);
  const auto a = g.project_to_shared(params, t, f);
  params[g.text_projector().first.weight].array() += 0.5;
  const auto b = g.project_to_shared(params, t, f);
  EXPECT_EQ(a.p_ske, b.p_ske);
  EXPECT_NE(a.p_txt, b.p_txt);
  EXPECT_THROW(g.project_to_shared(params, random_mat(3, 6, rng), f), DataError);
}

TEST(Interaction, OneBlockEqualsBlockCall) {
  Rng rng(25);
  ParamSet params;
  GuidanceBranch g(small_interaction(2, 1), params, rng);
  const SharedSpaceFeatures s{random_mat(4, 8, rng), random_mat(4, 8, rng)};
  EXPECT_EQ(g.run_interaction(params, s), g.interaction_block(params, 0, s.p_txt, s.p_ske).second);
  EXPECT_EQ(g.run_interaction(params, s), g.run_interaction(params, s));
}

TEST(Interaction, StaticTextFeedsOriginalProjection) {
  Rng rng(26);
  ParamSet params;
  auto cfg = small_interaction(2, 3);
  cfg.static_text = true;
  GuidanceBranch g(cfg, params, rng);
  const SharedSpaceFeatures s{random_mat(4, 8, rng), random_mat(4, 8, rng)};
  GuidanceTrace tr;
  g.run_interaction(params, s, &tr);
  for (const auto& b : tr.blocks) EXPECT_EQ(b.txt_in, s.p_txt);
}

TEST(Interaction, BackProjectionPooling) {
  Rng rng(27);
  ParamSet params;
  GuidanceBranch g(small_interaction(), params, rng);
  const Mat row = random_mat(1, 8, rng);
  const Mat rows = row.replicate(4, 1);
  nn::MlpCache c;
  const Mat one = nn::mlp(params, g.back_projector(), row, c);
  EXPECT_LE((g.back_project_pool(params, rows) - one).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(g.back_project_pool(params, Mat::Zero(4, 8)).cwiseAbs().maxCoeff(), 0.0);
  Mat perm = random_mat(4, 8, rng);
  const Mat a = g.back_project_pool(params, perm);
  perm.row(0).swap(perm.row(3));
  EXPECT_LE((g.back_project_pool(params, perm) - a).cwiseAbs().maxCoeff(), 1e-14);
}

// Finite differences on every guidance parameter and on f_bar_post,
// V=3, C_p=8, M=2.
TEST(Interaction, GradientCheck) {
  Rng rng(28);
  ParamSet params;
  auto cfg = small_interaction(2, 2);
  GuidanceBranch g(cfg, params, rng);
  const Mat text = random_mat(3, 6, rng);
  const Mat f = random_mat(3, 5, rng);
  const Mat weight = random_mat(1, 5, rng);
  auto loss = [&](const ParamSet& p, const Mat& fb) { return (g.forward(p, text, fb).array() * weight.array()).sum(); };

  GuidanceTrace tr;
  g.forward(params, text, f, &tr);
  ParamSet grads = params.zeros_like();
  const Mat d_f = g.backward(params, grads, tr, weight);

  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index e = 0; e < params[i].size(); ++e) {
      ParamSet plus = params, minus = params;
      plus[i].data()[e] += h;
      minus[i].data()[e] -= h;
      const double num = (loss(plus, f) - loss(minus, f)) / (2 * h);
      const double ana = grads[i].data()[e];
      worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
    }
  }
  for (Eigen::Index e = 0; e < f.size(); ++e) {
    Mat plus = f, minus = f;
    plus.data()[e] += h;
    minus.data()[e] -= h;
    const double num = (loss(params, plus) - loss(params, minus)) / (2 * h);
    const double ana = d_f.data()[e];
    worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
  }
  EXPECT_LT(worst, 1e-4);
}
