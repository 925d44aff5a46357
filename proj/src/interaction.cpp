#include "crossglg/interaction.hpp"

#include "crossglg/errors.hpp"

namespace crossglg {

void InteractionConfig::validate() const {
  if (blocks < 1) throw ConfigError("interaction: blocks must be >= 1");
  if (heads < 1 || shared_dim < 1 || shared_dim % heads != 0) {
    throw ConfigError("interaction: shared_dim must be a positive multiple of heads");
  }
  if (text_dim < 1 || post_dim < 1 || mlp_hidden < 1) throw ConfigError("interaction: widths must be >= 1");
}

void to_json(nlohmann::json& j, const InteractionConfig& c) {
  j = nlohmann::json{{"blocks", c.blocks},         {"shared_dim", c.shared_dim}, {"heads", c.heads},
                     {"text_dim", c.text_dim},     {"post_dim", c.post_dim},     {"mlp_hidden", c.mlp_hidden},
                     {"static_text", c.static_text}, {"residual", c.residual}};
}

void from_json(const nlohmann::json& j, InteractionConfig& c) {
  c.blocks = j.value("blocks", c.blocks);
  c.shared_dim = j.value("shared_dim", c.shared_dim);
  c.heads = j.value("heads", c.heads);
  c.text_dim = j.value("text_dim", c.text_dim);
  c.post_dim = j.value("post_dim", c.post_dim);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.static_text = j.value("static_text", c.static_text);
  c.residual = j.value("residual", c.residual);
}

GuidanceBranch::GuidanceBranch(const InteractionConfig& config, ParamSet& params, Rng& rng) : config_(config) {
  config_.validate();
  text_proj_ = nn::add_mlp(params, "guidance.text_proj", config_.text_dim, config_.mlp_hidden, config_.shared_dim, rng);
  ske_proj_ = nn::add_mlp(params, "guidance.ske_proj", config_.post_dim, config_.mlp_hidden, config_.shared_dim, rng);
  for (int b = 0; b < config_.blocks; ++b) {
    const std::string prefix = "guidance.block" + std::to_string(b);
    InteractionBlockRefs refs;
    refs.self_attn = nn::add_attention(params, prefix + ".self_attn", config_.shared_dim, config_.heads, rng);
    refs.cross_attn = nn::add_attention(params, prefix + ".cross_attn", config_.shared_dim, config_.heads, rng);
    refs.fuse = nn::add_mlp(params, prefix + ".fuse", config_.shared_dim, config_.mlp_hidden, config_.shared_dim, rng);
    blocks_.push_back(refs);
  }
  back_proj_ = nn::add_mlp(params, "guidance.back_proj", config_.shared_dim, config_.mlp_hidden, config_.post_dim, rng);
}

SharedSpaceFeatures GuidanceBranch::project_to_shared(const ParamSet& params, const Mat& text, const Mat& f_bar_post,
                                                      GuidanceTrace* trace) const {
  if (text.rows() != f_bar_post.rows()) {
    throw DataError("text rows (" + std::to_string(text.rows()) + ") differ from skeleton rows (" +
                    std::to_string(f_bar_post.rows()) + ")");
  }
  if (text.cols() != config_.text_dim) {
    throw DataError("text width " + std::to_string(text.cols()) + " does not match C_txt " +
                    std::to_string(config_.text_dim));
  }
  if (f_bar_post.cols() != config_.post_dim) {
    throw DataError("skeleton width " + std::to_string(f_bar_post.cols()) + " does not match C_post " +
                    std::to_string(config_.post_dim));
  }
  nn::MlpCache text_cache;
  nn::MlpCache ske_cache;
  SharedSpaceFeatures out;
  out.p_txt = nn::mlp(params, text_proj_, text, trace ? trace->text_proj : text_cache);
  out.p_ske = nn::mlp(params, ske_proj_, f_bar_post, trace ? trace->ske_proj : ske_cache);
  if (trace) trace->shared = out;
  return out;
}

std::pair<Mat, Mat> GuidanceBranch::interaction_block(const ParamSet& params, int block, const Mat& p_txt_prev,
                                                      const Mat& p_st_prev, InteractionBlockCache* cache) const {
  const auto& refs = blocks_.at(std::size_t(block));
  InteractionBlockCache local;
  InteractionBlockCache& c = cache ? *cache : local;
  c.txt_in = p_txt_prev;
  c.st_in = p_st_prev;

  Mat txt = nn::attention(params, refs.self_attn, p_txt_prev, p_txt_prev, 1, c.self_attn);
  if (config_.residual) txt += p_txt_prev;
  c.txt_out = txt;

  Mat st = nn::attention(params, refs.cross_attn, txt, p_st_prev, 1, c.cross_attn);
  if (config_.residual) st += p_st_prev;

  const Mat fused = nn::mlp(params, refs.fuse, txt + st, c.fuse);
  return {std::move(txt), fused};
}

Mat GuidanceBranch::run_interaction(const ParamSet& params, const SharedSpaceFeatures& shared,
                                    GuidanceTrace* trace) const {
  if (trace) trace->blocks.assign(std::size_t(config_.blocks), InteractionBlockCache{});
  Mat txt = shared.p_txt;
  Mat st = shared.p_ske;
  for (int b = 0; b < config_.blocks; ++b) {
    const Mat& txt_in = config_.static_text ? shared.p_txt : txt;
    auto [next_txt, next_st] =
        interaction_block(params, b, txt_in, st, trace ? &trace->blocks[std::size_t(b)] : nullptr);
    txt = std::move(next_txt);
    st = std::move(next_st);
  }
  if (trace) trace->p_st = st;
  return st;
}

Mat GuidanceBranch::back_project_pool(const ParamSet& params, const Mat& p_st, GuidanceTrace* trace) const {
  nn::MlpCache local;
  const Mat rows = nn::mlp(params, back_proj_, p_st, trace ? trace->back_proj : local);
  return rows.colwise().mean();
}

Mat GuidanceBranch::forward(const ParamSet& params, const Mat& text, const Mat& f_bar_post, GuidanceTrace* trace) const {
  const auto shared = project_to_shared(params, text, f_bar_post, trace);
  const Mat p_st = run_interaction(params, shared, trace);
  return back_project_pool(params, p_st, trace);
}

Mat GuidanceBranch::backward(const ParamSet& params, ParamSet& grads, const GuidanceTrace& trace,
                             const Mat& d_out) const {
  const Eigen::Index joints = trace.p_st.rows();
  const Mat d_rows = d_out.replicate(joints, 1) / double(joints);
  Mat d_st = nn::mlp_backward(params, grads, back_proj_, trace.back_proj, d_rows);

  Mat d_txt = Mat::Zero(joints, config_.shared_dim);  // gradient w.r.t. the current block's text output
  Mat d_p_txt = Mat::Zero(joints, config_.shared_dim);
  for (int b = config_.blocks - 1; b >= 0; --b) {
    const auto& refs = blocks_[std::size_t(b)];
    const auto& c = trace.blocks[std::size_t(b)];

    const Mat d_fused_in = nn::mlp_backward(params, grads, refs.fuse, c.fuse, d_st);
    Mat d_txt_out = d_txt + d_fused_in;

    const auto cross = nn::attention_backward(params, grads, refs.cross_attn, c.cross_attn, d_fused_in);
    d_txt_out += cross.d_query_in;
    Mat d_st_in = cross.d_key_in;
    if (config_.residual) d_st_in += d_fused_in;

    const auto self = nn::attention_backward(params, grads, refs.self_attn, c.self_attn, d_txt_out);
    Mat d_txt_in = self.d_query_in + self.d_key_in;
    if (config_.residual) d_txt_in += d_txt_out;

    if (config_.static_text) {
      d_p_txt += d_txt_in;
      d_txt.setZero();
    } else {
      d_txt = std::move(d_txt_in);
    }
    d_st = std::move(d_st_in);
  }
  if (!config_.static_text) d_p_txt = d_txt;

  nn::mlp_backward(params, grads, text_proj_, trace.text_proj, d_p_txt);
  return nn::mlp_backward(params, grads, ske_proj_, trace.ske_proj, d_st);
}

}  // namespace crossglg
