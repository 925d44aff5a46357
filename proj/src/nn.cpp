#include "crossglg/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crossglg::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.044715;

Mat uniform_matrix(int rows, int cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

LinearRef add_linear(ParamSet& params, const std::string& prefix, int in, int out, Rng& rng) {
  LinearRef ref;
  ref.weight = params.add(prefix + ".weight", uniform_matrix(in, out, std::sqrt(3.0 / double(in)), rng));
  ref.bias = params.add(prefix + ".bias", Mat::Zero(1, out));
  return ref;
}

Mat linear(const ParamSet& params, LinearRef ref, const Mat& x) {
  const Mat& w = params[ref.weight];
  if (x.cols() != w.rows()) {
    throw std::invalid_argument("linear: input width " + std::to_string(x.cols()) + " does not match " +
                                params.name(ref.weight) + " rows " + std::to_string(w.rows()));
  }
  Mat y = x * w;
  y.rowwise() += params[ref.bias].row(0);
  return y;
}

Mat linear_backward(const ParamSet& params, ParamSet& grads, LinearRef ref, const Mat& x, const Mat& dy) {
  grads[ref.weight].noalias() += x.transpose() * dy;
  grads[ref.bias] += dy.colwise().sum();
  return dy * params[ref.weight].transpose();
}

LayerNormRef add_layer_norm(ParamSet& params, const std::string& prefix, int width) {
  LayerNormRef ref;
  ref.gain = params.add(prefix + ".gain", Mat::Ones(1, width));
  ref.bias = params.add(prefix + ".bias", Mat::Zero(1, width));
  return ref;
}

Mat layer_norm(const ParamSet& params, LayerNormRef ref, const Mat& x, LayerNormCache& cache) {
  const Eigen::Index n = x.cols();
  cache.normalized.resize(x.rows(), n);
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const auto centered = x.row(r).array() - mean;
    const double var = centered.square().sum() / double(n);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[r] = inv;
    cache.normalized.row(r) = centered * inv;
  }
  Mat y = cache.normalized.array().rowwise() * params[ref.gain].row(0).array();
  y.rowwise() += params[ref.bias].row(0);
  return y;
}

Mat layer_norm_backward(const ParamSet& params, ParamSet& grads, LayerNormRef ref,
                        const LayerNormCache& cache, const Mat& dy) {
  grads[ref.gain] += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  grads[ref.bias] += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * params[ref.gain].row(0).array();
  const double n = double(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = dxhat.row(r).dot(cache.normalized.row(r)) / n;
    dx.row(r) = cache.inv_std[r] *
                (dxhat.row(r).array() - mean_d - cache.normalized.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

Mat gelu(const Mat& x) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  return x.unaryExpr([c](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + kGeluC * v * v * v))); });
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  Mat d = x.unaryExpr([c](double v) {
    const double th = std::tanh(c * (v + kGeluC * v * v * v));
    return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * kGeluC * v * v);
  });
  return d.cwiseProduct(dy);
}

MlpRef add_mlp(ParamSet& params, const std::string& prefix, int in, int hidden, int out, Rng& rng) {
  MlpRef ref;
  ref.first = add_linear(params, prefix + ".fc1", in, hidden, rng);
  ref.second = add_linear(params, prefix + ".fc2", hidden, out, rng);
  return ref;
}

Mat mlp(const ParamSet& params, const MlpRef& ref, const Mat& x, MlpCache& cache) {
  cache.input = x;
  cache.hidden_pre = linear(params, ref.first, x);
  cache.hidden = gelu(cache.hidden_pre);
  return linear(params, ref.second, cache.hidden);
}

Mat mlp_backward(const ParamSet& params, ParamSet& grads, const MlpRef& ref, const MlpCache& cache,
                 const Mat& dy) {
  const Mat dh = linear_backward(params, grads, ref.second, cache.hidden, dy);
  const Mat dpre = gelu_backward(cache.hidden_pre, dh);
  return linear_backward(params, grads, ref.first, cache.input, dpre);
}

AttentionRef add_attention(ParamSet& params, const std::string& prefix, int width, int heads, Rng& rng) {
  if (heads < 1 || width % heads != 0) {
    throw std::invalid_argument(prefix + ": width " + std::to_string(width) + " not divisible by heads " +
                                std::to_string(heads));
  }
  AttentionRef ref;
  ref.heads = heads;
  ref.query = add_linear(params, prefix + ".query", width, width, rng);
  ref.key = add_linear(params, prefix + ".key", width, width, rng);
  ref.value = add_linear(params, prefix + ".value", width, width, rng);
  ref.output = add_linear(params, prefix + ".output", width, width, rng);
  return ref;
}

Mat attention(const ParamSet& params, const AttentionRef& ref, const Mat& query_in, const Mat& key_in,
              int groups, AttentionCache& cache) {
  if (groups < 1 || query_in.rows() % groups != 0 || key_in.rows() % groups != 0) {
    throw std::invalid_argument("attention: rows not divisible into groups");
  }
  cache.groups = groups;
  cache.query_len = int(query_in.rows() / groups);
  cache.key_len = int(key_in.rows() / groups);
  cache.query_in = query_in;
  cache.key_in = key_in;
  cache.q = linear(params, ref.query, query_in);
  cache.k = linear(params, ref.key, key_in);
  cache.v = linear(params, ref.value, key_in);

  const int width = int(cache.q.cols());
  const int d = width / ref.heads;
  const double scale = 1.0 / std::sqrt(double(d));
  const int lq = cache.query_len;
  const int lk = cache.key_len;

  cache.context.setZero(query_in.rows(), width);
  cache.probs.assign(std::size_t(groups) * std::size_t(ref.heads), Mat());
  for (int g = 0; g < groups; ++g) {
    for (int h = 0; h < ref.heads; ++h) {
      Mat scores = cache.q.block(g * lq, h * d, lq, d) * cache.k.block(g * lk, h * d, lk, d).transpose();
      scores *= scale;
      softmax_rows_inplace(scores);
      cache.context.block(g * lq, h * d, lq, d).noalias() = scores * cache.v.block(g * lk, h * d, lk, d);
      cache.probs[std::size_t(g * ref.heads + h)] = std::move(scores);
    }
  }
  return linear(params, ref.output, cache.context);
}

AttentionGrads attention_backward(const ParamSet& params, ParamSet& grads, const AttentionRef& ref,
                                  const AttentionCache& cache, const Mat& dy) {
  const Mat d_context = linear_backward(params, grads, ref.output, cache.context, dy);
  const int width = int(cache.q.cols());
  const int d = width / ref.heads;
  const double scale = 1.0 / std::sqrt(double(d));
  const int lq = cache.query_len;
  const int lk = cache.key_len;

  Mat dq = Mat::Zero(cache.q.rows(), width);
  Mat dk = Mat::Zero(cache.k.rows(), width);
  Mat dv = Mat::Zero(cache.v.rows(), width);
  for (int g = 0; g < cache.groups; ++g) {
    for (int h = 0; h < ref.heads; ++h) {
      const Mat& p = cache.probs[std::size_t(g * ref.heads + h)];
      const auto dctx = d_context.block(g * lq, h * d, lq, d);
      const Mat dp = dctx * cache.v.block(g * lk, h * d, lk, d).transpose();
      dv.block(g * lk, h * d, lk, d).noalias() += p.transpose() * dctx;
      Mat ds = p.cwiseProduct(dp);
      const Vec row_dot = ds.rowwise().sum();
      ds -= p.cwiseProduct(row_dot.replicate(1, lk));
      ds *= scale;
      dq.block(g * lq, h * d, lq, d).noalias() += ds * cache.k.block(g * lk, h * d, lk, d);
      dk.block(g * lk, h * d, lk, d).noalias() += ds.transpose() * cache.q.block(g * lq, h * d, lq, d);
    }
  }
  AttentionGrads out;
  out.d_query_in = linear_backward(params, grads, ref.query, cache.query_in, dq);
  out.d_key_in = linear_backward(params, grads, ref.key, cache.key_in, dk);
  out.d_key_in += linear_backward(params, grads, ref.value, cache.key_in, dv);
  return out;
}

Mat head_averaged_probs(const AttentionCache& cache, int group, int heads) {
  Mat avg = Mat::Zero(cache.query_len, cache.key_len);
  for (int h = 0; h < heads; ++h) avg += cache.probs[std::size_t(group * heads + h)];
  return avg / double(heads);
}

Mat to_joint_major(const Mat& x, int frames, int joints) {
  Mat out(x.rows(), x.cols());
  for (int t = 0; t < frames; ++t) {
    for (int v = 0; v < joints; ++v) out.row(v * frames + t) = x.row(t * joints + v);
  }
  return out;
}

Mat to_frame_major(const Mat& x, int frames, int joints) {
  Mat out(x.rows(), x.cols());
  for (int t = 0; t < frames; ++t) {
    for (int v = 0; v < joints; ++v) out.row(t * joints + v) = x.row(v * frames + t);
  }
  return out;
}

}  // namespace crossglg::nn
