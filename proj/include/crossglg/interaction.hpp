#pragma once

#include "crossglg/nn.hpp"
#include "crossglg/tensor.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace crossglg {

struct InteractionConfig {
  int blocks = 3;        // M
  int shared_dim = 16;   // C_p
  int heads = 2;
  int text_dim = 64;     // C_txt
  int post_dim = 16;     // C_post
  int mlp_hidden = 32;
  // Feed the original text projection to every block instead of chaining.
  bool static_text = false;
  // Residual connections around the self- and cross-attention steps.
  bool residual = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const InteractionConfig& c);
void from_json(const nlohmann::json& j, InteractionConfig& c);

struct SharedSpaceFeatures {
  Mat p_txt;  // V x C_p
  Mat p_ske;  // V x C_p
};

struct InteractionBlockRefs {
  nn::AttentionRef self_attn;
  nn::AttentionRef cross_attn;
  nn::MlpRef fuse;
};

struct InteractionBlockCache {
  Mat txt_in;
  Mat st_in;
  nn::AttentionCache self_attn;
  Mat txt_out;
  nn::AttentionCache cross_attn;
  nn::MlpCache fuse;
};

struct GuidanceTrace {
  nn::MlpCache text_proj;
  nn::MlpCache ske_proj;
  SharedSpaceFeatures shared;
  std::vector<InteractionBlockCache> blocks;
  Mat p_st;  // output of the last block
  nn::MlpCache back_proj;
};

/// Text-guided branch: both modalities are projected per joint into a shared
/// space, fused by M blocks of self-attention over text followed by
/// text-queried cross-attention over skeleton features, then projected back
/// to the skeleton feature width and averaged over joints.
class GuidanceBranch {
 public:
  GuidanceBranch() = default;
  GuidanceBranch(const InteractionConfig& config, ParamSet& params, Rng& rng);

  const InteractionConfig& config() const { return config_; }

  SharedSpaceFeatures project_to_shared(const ParamSet& params, const Mat& text, const Mat& f_bar_post,
                                        GuidanceTrace* trace = nullptr) const;

  /// Returns (p_txt_i, p_st_i).
  std::pair<Mat, Mat> interaction_block(const ParamSet& params, int block, const Mat& p_txt_prev,
                                        const Mat& p_st_prev, InteractionBlockCache* cache = nullptr) const;

  Mat run_interaction(const ParamSet& params, const SharedSpaceFeatures& shared,
                      GuidanceTrace* trace = nullptr) const;

  /// Perceptron to C_post per row, then mean over joints. Returns 1 x C_post.
  Mat back_project_pool(const ParamSet& params, const Mat& p_st, GuidanceTrace* trace = nullptr) const;

  /// Full branch; returns f_out^c as 1 x C_post.
  Mat forward(const ParamSet& params, const Mat& text, const Mat& f_bar_post, GuidanceTrace* trace = nullptr) const;

  /// Accumulates parameter gradients; returns the gradient w.r.t. f_bar_post.
  Mat backward(const ParamSet& params, ParamSet& grads, const GuidanceTrace& trace, const Mat& d_out) const;

  const nn::MlpRef& text_projector() const { return text_proj_; }
  const nn::MlpRef& skeleton_projector() const { return ske_proj_; }
  const nn::MlpRef& back_projector() const { return back_proj_; }
  const std::vector<InteractionBlockRefs>& block_refs() const { return blocks_; }

 private:
  InteractionConfig config_;
  nn::MlpRef text_proj_;
  nn::MlpRef ske_proj_;
  std::vector<InteractionBlockRefs> blocks_;
  nn::MlpRef back_proj_;
};

}  // namespace crossglg
