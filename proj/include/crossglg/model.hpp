#pragma once

#include "crossglg/encoder.hpp"
#include "crossglg/interaction.hpp"
#include "crossglg/nn.hpp"
#include "crossglg/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

namespace crossglg {

struct ModelConfig {
  EncoderConfig encoder;
  InteractionConfig interaction;
  int n_classes = 10;
  int classifier_hidden = 32;
  int head_hidden = 32;  // skeleton-branch projection before joint pooling
  double alpha1 = 0.5;
  double alpha2 = 0.2;
  double lr = 0.05;
  double momentum = 0.9;  // SGD momentum, or Adam's first-moment decay
  std::string optimizer = "sgd";  // "sgd" (momentum) or "adam"
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global gradient-norm limit per step; 0 disables
  int batch = 128;
  int epochs = 110;
  std::uint64_t seed = 0;
  bool g2l = true;   // calibration loss and joint reweighting
  bool l2g = true;   // text-guided branch
  bool binary_target = false;  // calibrate against raw K instead of K / sum(K)
  std::string topology = "ntu25";
  int threads = 1;  // per-sample workers; results do not depend on it

  // Loss weights actually applied, after the g2l / l2g toggles.
  double effective_alpha1() const { return g2l ? alpha1 : 0.0; }
  double effective_alpha2() const { return l2g ? alpha2 : 0.0; }

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Small configuration for laptop-scale runs on synthetic data.
ModelConfig desk_config();
/// Nine encoding blocks with the importance head after the fifth, full-size
/// optimisation settings.
ModelConfig full_config();
/// T=4, V=5, C=8, M=2; used for finite-difference checks.
ModelConfig tiny_config();

struct LossBreakdown {
  double l_s = 0.0;
  double l_c = 0.0;
  double l_calibrate = 0.0;
  double l_overall = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

/// (1/V) * sum (k_out - k_gt)^2. Throws std::invalid_argument on length mismatch.
double loss_calibrate(const Vec& k_out, const Vec& k_gt);
/// -log y_hat[y]. Throws std::invalid_argument for an invalid class index.
double loss_ce(const Vec& y_hat, int y);
/// Cross-entropy from unnormalised scores, log-sum-exp form.
double loss_ce_logits(const Vec& logits, int y);
LossBreakdown loss_overall(double l_s, double l_calibrate, double l_c, double alpha1 = 0.5, double alpha2 = 0.2);

struct SampleTrace {
  EncoderTrace encoder;
  EncoderOutput encoded;
  nn::MlpCache head;
  Mat f_out_s;
  nn::MlpCache cls_s;
  Vec logits_s;
  bool guided = false;
  GuidanceTrace guidance;
  Mat f_out_c;
  nn::MlpCache cls_c;
  Vec logits_c;
};

/// Relative weights of the three loss terms for one backward pass.
struct LossWeights {
  double skeleton = 1.0;
  double calibrate = 0.0;
  double guidance = 0.0;
};

/// Encoder, skeleton head, text-guided branch and the classifier shared by
/// both branches, with all parameters in one ParamSet.
class CrossGlgModel {
 public:
  explicit CrossGlgModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Replaces all parameters; names and shapes must match this architecture.
  void load_params(const ParamSet& params);

  const SkeletonEncoder& encoder() const { return encoder_; }
  const GuidanceBranch& guidance() const { return guidance_; }
  const nn::MlpRef& skeleton_head() const { return head_; }
  const nn::MlpRef& classifier() const { return classifier_; }

  /// Skeleton-branch feature f_out^s (1 x C_post): per-joint projection of
  /// the pooled post features, averaged over joints.
  Mat skeleton_feature(const Mat& f_bar_post, nn::MlpCache* cache = nullptr) const;
  Vec class_logits(const Mat& feature, nn::MlpCache* cache = nullptr) const;
  Vec classify(const Mat& feature) const;

  EncoderOutput encode(const Mat& frames, EncoderTrace* trace = nullptr) const;
  /// Inference path: frames only.
  Mat extract_feature(const Mat& frames) const;

  /// Forward pass of one sample. `text` may be null when the guidance branch
  /// is not needed.
  LossBreakdown forward(const Mat& frames, int class_index, const Vec& k_gt, const Mat* text,
                        SampleTrace* trace = nullptr) const;

  /// Forward and backward of one sample; gradients of
  /// w.skeleton * L_s + w.calibrate * L_cal + w.guidance * L_c, scaled by
  /// `scale`, are added to `grads`.
  LossBreakdown forward_backward(const Mat& frames, int class_index, const Vec& k_gt, const Mat* text,
                                 const LossWeights& weights, double scale, ParamSet& grads) const;

  LossWeights default_weights() const;

 private:
  ModelConfig config_;
  ParamSet params_;
  SkeletonEncoder encoder_;
  nn::MlpRef head_;
  GuidanceBranch guidance_;
  nn::MlpRef classifier_;
};

}  // namespace crossglg
