#pragma once

#include "crossglg/nn.hpp"
#include "crossglg/tensor.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <vector>

namespace crossglg {

enum class TemporalPooling { mean, max };

struct EncoderConfig {
  int blocks = 4;      // N
  int pre_blocks = 2;  // N_pre; N_pre == N applies the joint weights to the final output only
  int embed_dim = 16;
  int pre_dim = 16;
  int post_dim = 16;
  int heads = 2;
  int frames = 20;
  int joints = 25;
  int jid_hidden = 16;
  int ffn_hidden = 32;
  // When set, joint features are scaled by mix * k + (1 - mix) instead of k.
  bool reweight_residual = false;
  double reweight_mix = 0.5;
  TemporalPooling pooling = TemporalPooling::mean;

  int post_blocks() const { return blocks - pre_blocks; }
  void validate() const;
};

/// round(5N/9), clamped to [1, N].
int default_pre_blocks(int blocks);

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

struct EncoderBlockRefs {
  nn::LayerNormRef spatial_norm;
  nn::AttentionRef spatial;
  nn::LayerNormRef temporal_norm;
  nn::AttentionRef temporal;
  nn::LayerNormRef ffn_norm;
  nn::MlpRef ffn;
};

struct EncoderBlockCache {
  Mat input;
  nn::LayerNormCache spatial_norm;
  nn::AttentionCache spatial;
  Mat spatial_out;   // input + spatial attention, before joint reweighting
  Vec joint_scale;   // empty when no reweighting
  Mat reweighted;    // spatial-stage output entering the temporal stage
  nn::LayerNormCache temporal_norm;
  nn::AttentionCache temporal;
  Mat temporal_out;
  nn::LayerNormCache ffn_norm;
  nn::MlpCache ffn;
};

struct JidCache {
  Mat input;       // V x C_pre
  Mat hidden_pre;  // V x hidden
  Mat hidden;
  Vec scores;
};

struct EncoderOutput {
  Mat f_pre;       // (T*V) x C_pre
  Mat f_post;      // (T*V) x C_post
  Mat f_bar_post;  // V x C_post
  Vec k_out;       // V, joint importance
  std::vector<Mat> attention_maps;  // per block, V x V averaged over time and heads
};

struct EncoderTrace {
  Mat input;
  Mat embedded;
  std::optional<Mat> pre_proj_input;
  std::optional<Mat> post_proj_input;
  std::vector<EncoderBlockCache> blocks;
  Mat f_bar_pre;
  std::vector<Eigen::Index> pre_argmax;   // max pooling only
  std::vector<Eigen::Index> post_argmax;  // max pooling only
  JidCache jid;
  bool reweight = false;
  Mat final_unweighted;  // N_post == 0: features before the output reweighting
  Vec final_scale;
};

/// Spatio-temporal transformer over (frame, joint) tokens with a joint
/// importance head between the two stages of blocks.
///
/// The first pre_blocks blocks produce f_pre. Its temporal mean feeds the
/// importance head (linear, GELU, linear, softmax over joints), whose output
/// k_out scales every joint's features right after the spatial stage of each
/// later block.
class SkeletonEncoder {
 public:
  SkeletonEncoder() = default;
  SkeletonEncoder(const EncoderConfig& config, ParamSet& params, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  Mat embed(const ParamSet& params, const Mat& frames) const;

  Mat encoding_block(const ParamSet& params, int block, const Mat& x, const Vec* joint_weights,
                     EncoderBlockCache& cache) const;
  Mat encoding_block_backward(const ParamSet& params, ParamSet& grads, int block, const EncoderBlockCache& cache,
                              const Mat& dy, Vec* d_joint_weights) const;

  Vec jid_forward(const ParamSet& params, const Mat& f_bar_pre, JidCache& cache) const;
  Mat jid_backward(const ParamSet& params, ParamSet& grads, const JidCache& cache, const Vec& k_out,
                   const Vec& d_k_out) const;

  /// `reweight` enables joint-importance reweighting; k_out is computed either way.
  EncoderOutput forward(const ParamSet& params, const Mat& frames, bool reweight, EncoderTrace* trace = nullptr) const;

  void backward(const ParamSet& params, ParamSet& grads, const EncoderTrace& trace, const EncoderOutput& out,
                const Mat& d_f_bar_post, const Vec& d_k_out) const;

  const Mat& positional_encoding() const { return positional_; }
  std::size_t joint_embedding_index() const { return joint_embedding_; }
  const std::vector<EncoderBlockRefs>& block_refs() const { return blocks_; }
  const nn::MlpRef& jid_refs() const { return jid_; }

 private:
  Vec joint_scale(const Vec& k_out) const;

  EncoderConfig config_;
  nn::LinearRef embedding_;
  std::size_t joint_embedding_ = 0;
  std::optional<nn::LinearRef> pre_proj_;
  std::optional<nn::LinearRef> post_proj_;
  std::vector<EncoderBlockRefs> blocks_;
  nn::MlpRef jid_;
  Mat positional_;  // T x C_embed, fixed sinusoidal
};

/// Temporal pooling of (T*V) x C features into V x C.
Mat pool_time(const Mat& x, int frames, int joints, TemporalPooling pooling, std::vector<Eigen::Index>* argmax);
Mat pool_time_backward(const Mat& d_pooled, int frames, int joints, TemporalPooling pooling,
                       const std::vector<Eigen::Index>& argmax);

Mat sinusoidal_encoding(int frames, int width);

struct AttentionReport {
  std::vector<Mat> blocks;  // V x V, rows sum to 1
  Vec aggregate;            // mean attention received per joint across blocks
  Vec k_out;
};

AttentionReport export_attention(const EncoderOutput& output);
/// Comma-separated rows "block,query_joint,w_0..w_{V-1}", then one
/// "aggregate" row and one "k_out" row.
std::string attention_report_csv(const AttentionReport& report);

}  // namespace crossglg
