#pragma once

// Differentiable building blocks with explicit backward passes.
//
// Parameters live in a ParamSet owned by the caller; each layer is described
// by a small "ref" struct of indices into it. Forward functions fill a cache
// that the matching backward function consumes. Backward functions accumulate
// into a gradient ParamSet with the same layout and return the gradient with
// respect to the layer input.

#include "crossglg/tensor.hpp"

#include <string>
#include <vector>

namespace crossglg::nn {

struct LinearRef {
  std::size_t weight = 0;  // in x out
  std::size_t bias = 0;    // 1 x out
};

LinearRef add_linear(ParamSet& params, const std::string& prefix, int in, int out, Rng& rng);
Mat linear(const ParamSet& params, LinearRef ref, const Mat& x);
Mat linear_backward(const ParamSet& params, ParamSet& grads, LinearRef ref, const Mat& x, const Mat& dy);

struct LayerNormRef {
  std::size_t gain = 0;
  std::size_t bias = 0;
};

struct LayerNormCache {
  Mat normalized;
  Vec inv_std;
};

LayerNormRef add_layer_norm(ParamSet& params, const std::string& prefix, int width);
Mat layer_norm(const ParamSet& params, LayerNormRef ref, const Mat& x, LayerNormCache& cache);
Mat layer_norm_backward(const ParamSet& params, ParamSet& grads, LayerNormRef ref,
                        const LayerNormCache& cache, const Mat& dy);

// tanh approximation of GELU; smooth and zero at zero.
Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);

/// Two linear layers with a GELU in between.
struct MlpRef {
  LinearRef first;
  LinearRef second;
};

struct MlpCache {
  Mat input;
  Mat hidden_pre;
  Mat hidden;
};

MlpRef add_mlp(ParamSet& params, const std::string& prefix, int in, int hidden, int out, Rng& rng);
Mat mlp(const ParamSet& params, const MlpRef& ref, const Mat& x, MlpCache& cache);
Mat mlp_backward(const ParamSet& params, ParamSet& grads, const MlpRef& ref, const MlpCache& cache,
                 const Mat& dy);

/// Multi-head scaled dot-product attention over independent row groups.
///
/// Query rows are split into `groups` contiguous blocks of equal length, key
/// rows likewise; group g of the queries only attends to group g of the keys.
struct AttentionRef {
  LinearRef query;
  LinearRef key;
  LinearRef value;
  LinearRef output;
  int heads = 1;
};

struct AttentionCache {
  int groups = 1;
  int query_len = 0;
  int key_len = 0;
  Mat query_in;
  Mat key_in;
  Mat q;
  Mat k;
  Mat v;
  Mat context;
  std::vector<Mat> probs;  // index group * heads + head, query_len x key_len
};

AttentionRef add_attention(ParamSet& params, const std::string& prefix, int width, int heads, Rng& rng);
Mat attention(const ParamSet& params, const AttentionRef& ref, const Mat& query_in, const Mat& key_in,
              int groups, AttentionCache& cache);

struct AttentionGrads {
  Mat d_query_in;
  Mat d_key_in;
};
AttentionGrads attention_backward(const ParamSet& params, ParamSet& grads, const AttentionRef& ref,
                                  const AttentionCache& cache, const Mat& dy);

// Attention weights of one group averaged over heads.
Mat head_averaged_probs(const AttentionCache& cache, int group, int heads);

// Reorders rows t * V + v into v * T + t and back.
Mat to_joint_major(const Mat& x, int frames, int joints);
Mat to_frame_major(const Mat& x, int frames, int joints);

}  // namespace crossglg::nn
