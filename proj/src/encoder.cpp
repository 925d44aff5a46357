#include "crossglg/encoder.hpp"

#include "crossglg/errors.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace crossglg {

namespace {

std::string block_prefix(int b) { return "encoder.block" + std::to_string(b); }

}  // namespace

int default_pre_blocks(int blocks) {
  const int n = int(std::lround(5.0 * blocks / 9.0));
  return std::clamp(n, 1, std::max(blocks, 1));
}

void EncoderConfig::validate() const {
  if (blocks < 1) throw ConfigError("encoder: blocks must be >= 1");
  if (pre_blocks < 1 || pre_blocks > blocks) throw ConfigError("encoder: pre_blocks must be in [1, blocks]");
  if (heads < 1) throw ConfigError("encoder: heads must be >= 1");
  for (int w : {embed_dim, pre_dim, post_dim}) {
    if (w < 1 || w % heads != 0) throw ConfigError("encoder: channel widths must be positive multiples of heads");
  }
  if (frames < 1 || joints < 1) throw ConfigError("encoder: frames and joints must be >= 1");
  if (jid_hidden < 1 || ffn_hidden < 1) throw ConfigError("encoder: hidden widths must be >= 1");
  if (reweight_mix < 0.0 || reweight_mix > 1.0) throw ConfigError("encoder: reweight_mix must be in [0, 1]");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"blocks", c.blocks},
                     {"pre_blocks", c.pre_blocks},
                     {"embed_dim", c.embed_dim},
                     {"pre_dim", c.pre_dim},
                     {"post_dim", c.post_dim},
                     {"heads", c.heads},
                     {"frames", c.frames},
                     {"joints", c.joints},
                     {"jid_hidden", c.jid_hidden},
                     {"ffn_hidden", c.ffn_hidden},
                     {"reweight_residual", c.reweight_residual},
                     {"reweight_mix", c.reweight_mix},
                     {"pooling", c.pooling == TemporalPooling::mean ? "mean" : "max"}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.blocks = j.value("blocks", c.blocks);
  c.pre_blocks = j.value("pre_blocks", c.pre_blocks);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.pre_dim = j.value("pre_dim", c.pre_dim);
  c.post_dim = j.value("post_dim", c.post_dim);
  c.heads = j.value("heads", c.heads);
  c.frames = j.value("frames", c.frames);
  c.joints = j.value("joints", c.joints);
  c.jid_hidden = j.value("jid_hidden", c.jid_hidden);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.reweight_residual = j.value("reweight_residual", c.reweight_residual);
  c.reweight_mix = j.value("reweight_mix", c.reweight_mix);
  const std::string pooling = j.value("pooling", std::string(c.pooling == TemporalPooling::mean ? "mean" : "max"));
  if (pooling == "mean") {
    c.pooling = TemporalPooling::mean;
  } else if (pooling == "max") {
    c.pooling = TemporalPooling::max;
  } else {
    throw ConfigError("unknown pooling '" + pooling + "'");
  }
}

Mat sinusoidal_encoding(int frames, int width) {
  Mat pe(frames, width);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -double(2 * (i / 2)) / double(width));
      pe(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return pe;
}

Mat pool_time(const Mat& x, int frames, int joints, TemporalPooling pooling, std::vector<Eigen::Index>* argmax) {
  const Eigen::Index c = x.cols();
  if (pooling == TemporalPooling::mean) {
    Mat out = Mat::Zero(joints, c);
    for (int t = 0; t < frames; ++t) out += x.middleRows(Eigen::Index(t) * joints, joints);
    return out / double(frames);
  }
  Mat out = x.topRows(joints);
  if (argmax != nullptr) argmax->assign(std::size_t(joints * c), 0);
  for (int t = 1; t < frames; ++t) {
    for (int v = 0; v < joints; ++v) {
      for (Eigen::Index k = 0; k < c; ++k) {
        const double value = x(Eigen::Index(t) * joints + v, k);
        if (value > out(v, k)) {
          out(v, k) = value;
          if (argmax != nullptr) (*argmax)[std::size_t(v * c + k)] = t;
        }
      }
    }
  }
  return out;
}

Mat pool_time_backward(const Mat& d_pooled, int frames, int joints, TemporalPooling pooling,
                       const std::vector<Eigen::Index>& argmax) {
  const Eigen::Index c = d_pooled.cols();
  Mat dx = Mat::Zero(Eigen::Index(frames) * joints, c);
  if (pooling == TemporalPooling::mean) {
    const Mat share = d_pooled / double(frames);
    for (int t = 0; t < frames; ++t) dx.middleRows(Eigen::Index(t) * joints, joints) = share;
    return dx;
  }
  for (int v = 0; v < joints; ++v) {
    for (Eigen::Index k = 0; k < c; ++k) {
      dx(argmax[std::size_t(v * c + k)] * joints + v, k) = d_pooled(v, k);
    }
  }
  return dx;
}

SkeletonEncoder::SkeletonEncoder(const EncoderConfig& config, ParamSet& params, Rng& rng) : config_(config) {
  config_.validate();
  embedding_ = nn::add_linear(params, "encoder.embed", 3, config_.embed_dim, rng);
  {
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    Mat je(config_.joints, config_.embed_dim);
    for (Eigen::Index i = 0; i < je.size(); ++i) je.data()[i] = dist(rng);
    joint_embedding_ = params.add("encoder.joint_embedding", std::move(je));
  }
  if (config_.pre_dim != config_.embed_dim) {
    pre_proj_ = nn::add_linear(params, "encoder.pre_proj", config_.embed_dim, config_.pre_dim, rng);
  }
  for (int b = 0; b < config_.blocks; ++b) {
    if (b == config_.pre_blocks && config_.post_dim != config_.pre_dim) {
      post_proj_ = nn::add_linear(params, "encoder.post_proj", config_.pre_dim, config_.post_dim, rng);
    }
    const int width = b < config_.pre_blocks ? config_.pre_dim : config_.post_dim;
    const auto prefix = block_prefix(b);
    EncoderBlockRefs refs;
    refs.spatial_norm = nn::add_layer_norm(params, prefix + ".spatial_norm", width);
    refs.spatial = nn::add_attention(params, prefix + ".spatial_attn", width, config_.heads, rng);
    refs.temporal_norm = nn::add_layer_norm(params, prefix + ".temporal_norm", width);
    refs.temporal = nn::add_attention(params, prefix + ".temporal_attn", width, config_.heads, rng);
    refs.ffn_norm = nn::add_layer_norm(params, prefix + ".ffn_norm", width);
    refs.ffn = nn::add_mlp(params, prefix + ".ffn", width, config_.ffn_hidden, width, rng);
    blocks_.push_back(refs);
  }
  if (config_.pre_blocks == config_.blocks && config_.post_dim != config_.pre_dim) {
    post_proj_ = nn::add_linear(params, "encoder.post_proj", config_.pre_dim, config_.post_dim, rng);
  }
  jid_ = nn::add_mlp(params, "jid", config_.pre_dim, config_.jid_hidden, 1, rng);
  positional_ = sinusoidal_encoding(config_.frames, config_.embed_dim);
}

Mat SkeletonEncoder::embed(const ParamSet& params, const Mat& frames) const {
  const int t_count = config_.frames;
  const int v_count = config_.joints;
  if (frames.rows() != Eigen::Index(t_count) * v_count || frames.cols() != 3) {
    throw DataError("encoder input must be (" + std::to_string(t_count) + "*" + std::to_string(v_count) +
                    ") x 3, got " + std::to_string(frames.rows()) + " x " + std::to_string(frames.cols()));
  }
  Mat out = nn::linear(params, embedding_, frames);
  const Mat& je = params[joint_embedding_];
  for (int t = 0; t < t_count; ++t) {
    auto block = out.middleRows(Eigen::Index(t) * v_count, v_count);
    block += je;
    block.rowwise() += positional_.row(t);
  }
  return out;
}

Vec SkeletonEncoder::joint_scale(const Vec& k_out) const {
  if (!config_.reweight_residual) return k_out;
  return (config_.reweight_mix * k_out.array() + (1.0 - config_.reweight_mix)).matrix();
}

Mat SkeletonEncoder::encoding_block(const ParamSet& params, int block, const Mat& x, const Vec* joint_weights,
                                    EncoderBlockCache& cache) const {
  const auto& refs = blocks_.at(std::size_t(block));
  const int t_count = config_.frames;
  const int v_count = config_.joints;
  cache.input = x;

  // Spatial interaction: joints attend to each other within a frame.
  const Mat a = nn::layer_norm(params, refs.spatial_norm, x, cache.spatial_norm);
  cache.spatial_out = x + nn::attention(params, refs.spatial, a, a, t_count, cache.spatial);

  if (joint_weights != nullptr) {
    cache.joint_scale = joint_scale(*joint_weights);
    cache.reweighted = cache.spatial_out;
    for (int t = 0; t < t_count; ++t) {
      cache.reweighted.middleRows(Eigen::Index(t) * v_count, v_count).array().colwise() *= cache.joint_scale.array();
    }
  } else {
    cache.joint_scale.resize(0);
    cache.reweighted = cache.spatial_out;
  }

  // Temporal interaction: each joint attends over frames.
  const Mat b = nn::layer_norm(params, refs.temporal_norm, cache.reweighted, cache.temporal_norm);
  const Mat b_joint = nn::to_joint_major(b, t_count, v_count);
  const Mat temporal = nn::attention(params, refs.temporal, b_joint, b_joint, v_count, cache.temporal);
  cache.temporal_out = cache.reweighted + nn::to_frame_major(temporal, t_count, v_count);

  const Mat c = nn::layer_norm(params, refs.ffn_norm, cache.temporal_out, cache.ffn_norm);
  return cache.temporal_out + nn::mlp(params, refs.ffn, c, cache.ffn);
}

Mat SkeletonEncoder::encoding_block_backward(const ParamSet& params, ParamSet& grads, int block,
                                             const EncoderBlockCache& cache, const Mat& dy,
                                             Vec* d_joint_weights) const {
  const auto& refs = blocks_.at(std::size_t(block));
  const int t_count = config_.frames;
  const int v_count = config_.joints;

  Mat d_temporal_out = dy;
  d_temporal_out += nn::layer_norm_backward(params, grads, refs.ffn_norm, cache.ffn_norm,
                                            nn::mlp_backward(params, grads, refs.ffn, cache.ffn, dy));

  Mat d_reweighted = d_temporal_out;
  {
    const auto g = nn::attention_backward(params, grads, refs.temporal, cache.temporal,
                                          nn::to_joint_major(d_temporal_out, t_count, v_count));
    const Mat d_b = nn::to_frame_major(g.d_query_in + g.d_key_in, t_count, v_count);
    d_reweighted += nn::layer_norm_backward(params, grads, refs.temporal_norm, cache.temporal_norm, d_b);
  }

  Mat d_spatial_out = d_reweighted;
  if (cache.joint_scale.size() > 0) {
    const double mix = config_.reweight_residual ? config_.reweight_mix : 1.0;
    for (int t = 0; t < t_count; ++t) {
      const auto rows = Eigen::seqN(Eigen::Index(t) * v_count, v_count);
      if (d_joint_weights != nullptr) {
        *d_joint_weights +=
            mix * (d_reweighted(rows, Eigen::all).cwiseProduct(cache.spatial_out(rows, Eigen::all))).rowwise().sum();
      }
      d_spatial_out(rows, Eigen::all).array().colwise() *= cache.joint_scale.array();
    }
  }

  Mat dx = d_spatial_out;
  const auto g = nn::attention_backward(params, grads, refs.spatial, cache.spatial, d_spatial_out);
  dx += nn::layer_norm_backward(params, grads, refs.spatial_norm, cache.spatial_norm, g.d_query_in + g.d_key_in);
  return dx;
}

Vec SkeletonEncoder::jid_forward(const ParamSet& params, const Mat& f_bar_pre, JidCache& cache) const {
  cache.input = f_bar_pre;
  cache.hidden_pre = nn::linear(params, jid_.first, f_bar_pre);
  cache.hidden = nn::gelu(cache.hidden_pre);
  const Mat scores = nn::linear(params, jid_.second, cache.hidden);
  cache.scores = scores.col(0);
  return softmax(cache.scores);
}

Mat SkeletonEncoder::jid_backward(const ParamSet& params, ParamSet& grads, const JidCache& cache, const Vec& k_out,
                                  const Vec& d_k_out) const {
  const Vec d_scores = k_out.cwiseProduct(d_k_out.array().matrix() - Vec::Constant(k_out.size(), k_out.dot(d_k_out)));
  const Mat d_hidden = nn::linear_backward(params, grads, jid_.second, cache.hidden, Mat(d_scores));
  const Mat d_pre = nn::gelu_backward(cache.hidden_pre, d_hidden);
  return nn::linear_backward(params, grads, jid_.first, cache.input, d_pre);
}

EncoderOutput SkeletonEncoder::forward(const ParamSet& params, const Mat& frames, bool reweight,
                                       EncoderTrace* trace) const {
  EncoderTrace local;
  EncoderTrace& tr = trace != nullptr ? *trace : local;
  const int t_count = config_.frames;
  const int v_count = config_.joints;
  tr.reweight = reweight;
  tr.input = frames;
  tr.blocks.assign(std::size_t(config_.blocks), EncoderBlockCache{});

  EncoderOutput out;
  tr.embedded = embed(params, frames);
  Mat x = tr.embedded;
  if (pre_proj_) {
    tr.pre_proj_input = x;
    x = nn::linear(params, *pre_proj_, x);
  }
  for (int b = 0; b < config_.pre_blocks; ++b) x = encoding_block(params, b, x, nullptr, tr.blocks[std::size_t(b)]);
  out.f_pre = x;

  tr.f_bar_pre = pool_time(out.f_pre, t_count, v_count, config_.pooling, &tr.pre_argmax);
  out.k_out = jid_forward(params, tr.f_bar_pre, tr.jid);

  if (post_proj_) {
    tr.post_proj_input = x;
    x = nn::linear(params, *post_proj_, x);
  }
  const Vec* weights = reweight ? &out.k_out : nullptr;
  for (int b = config_.pre_blocks; b < config_.blocks; ++b) {
    x = encoding_block(params, b, x, weights, tr.blocks[std::size_t(b)]);
  }
  if (config_.post_blocks() == 0 && reweight) {
    tr.final_unweighted = x;
    tr.final_scale = joint_scale(out.k_out);
    for (int t = 0; t < t_count; ++t) {
      x.middleRows(Eigen::Index(t) * v_count, v_count).array().colwise() *= tr.final_scale.array();
    }
  }
  out.f_post = std::move(x);
  out.f_bar_post = pool_time(out.f_post, t_count, v_count, config_.pooling, &tr.post_argmax);

  out.attention_maps.reserve(std::size_t(config_.blocks));
  for (int b = 0; b < config_.blocks; ++b) {
    const auto& cache = tr.blocks[std::size_t(b)].spatial;
    Mat avg = Mat::Zero(v_count, v_count);
    for (int t = 0; t < t_count; ++t) avg += nn::head_averaged_probs(cache, t, config_.heads);
    out.attention_maps.push_back(avg / double(t_count));
  }
  return out;
}

void SkeletonEncoder::backward(const ParamSet& params, ParamSet& grads, const EncoderTrace& tr,
                               const EncoderOutput& out, const Mat& d_f_bar_post, const Vec& d_k_out) const {
  const int t_count = config_.frames;
  const int v_count = config_.joints;
  Vec d_k = d_k_out.size() > 0 ? d_k_out : Vec::Zero(v_count);

  Mat dx = pool_time_backward(d_f_bar_post, t_count, v_count, config_.pooling, tr.post_argmax);
  if (config_.post_blocks() == 0 && tr.reweight) {
    const double mix = config_.reweight_residual ? config_.reweight_mix : 1.0;
    for (int t = 0; t < t_count; ++t) {
      auto rows = dx.middleRows(Eigen::Index(t) * v_count, v_count);
      d_k += mix * rows.cwiseProduct(tr.final_unweighted.middleRows(Eigen::Index(t) * v_count, v_count)).rowwise().sum();
      rows.array().colwise() *= tr.final_scale.array();
    }
  }
  for (int b = config_.blocks - 1; b >= config_.pre_blocks; --b) {
    dx = encoding_block_backward(params, grads, b, tr.blocks[std::size_t(b)], dx, tr.reweight ? &d_k : nullptr);
  }
  if (post_proj_) dx = nn::linear_backward(params, grads, *post_proj_, *tr.post_proj_input, dx);

  if (d_k.cwiseAbs().maxCoeff() > 0.0) {
    const Mat d_f_bar_pre = jid_backward(params, grads, tr.jid, out.k_out, d_k);
    dx += pool_time_backward(d_f_bar_pre, t_count, v_count, config_.pooling, tr.pre_argmax);
  }
  for (int b = config_.pre_blocks - 1; b >= 0; --b) {
    dx = encoding_block_backward(params, grads, b, tr.blocks[std::size_t(b)], dx, nullptr);
  }
  if (pre_proj_) dx = nn::linear_backward(params, grads, *pre_proj_, *tr.pre_proj_input, dx);

  // Embedding: linear map of coordinates plus per-joint table.
  nn::linear_backward(params, grads, embedding_, tr.input, dx);
  Mat& d_je = grads[joint_embedding_];
  for (int t = 0; t < t_count; ++t) d_je += dx.middleRows(Eigen::Index(t) * v_count, v_count);
}

AttentionReport export_attention(const EncoderOutput& output) {
  AttentionReport report;
  report.blocks = output.attention_maps;
  report.k_out = output.k_out;
  if (!report.blocks.empty()) {
    const Eigen::Index v = report.blocks.front().cols();
    report.aggregate = Vec::Zero(v);
    for (const auto& m : report.blocks) report.aggregate += m.colwise().mean().transpose();
    report.aggregate /= double(report.blocks.size());
  }
  return report;
}

std::string attention_report_csv(const AttentionReport& report) {
  std::ostringstream os;
  os << std::setprecision(9);
  const Eigen::Index v = report.blocks.empty() ? report.k_out.size() : report.blocks.front().cols();
  os << "block,query_joint";
  for (Eigen::Index j = 0; j < v; ++j) os << ",w" << j;
  os << '\n';
  for (std::size_t b = 0; b < report.blocks.size(); ++b) {
    const Mat& m = report.blocks[b];
    for (Eigen::Index q = 0; q < m.rows(); ++q) {
      os << b << ',' << q;
      for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << m(q, j);
      os << '\n';
    }
  }
  os << "aggregate,";
  for (Eigen::Index j = 0; j < report.aggregate.size(); ++j) os << ',' << report.aggregate[j];
  os << '\n';
  if (report.k_out.size() > 0) {
    os << "k_out,";
    for (Eigen::Index j = 0; j < report.k_out.size(); ++j) os << ',' << report.k_out[j];
    os << '\n';
  }
  return os.str();
}

}  // namespace crossglg
