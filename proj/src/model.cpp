#include "crossglg/model.hpp"

#include "crossglg/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace crossglg {

void ModelConfig::validate() const {
  encoder.validate();
  interaction.validate();
  if (interaction.post_dim != encoder.post_dim) {
    throw ConfigError("interaction.post_dim (" + std::to_string(interaction.post_dim) +
                      ") must equal encoder.post_dim (" + std::to_string(encoder.post_dim) + ")");
  }
  if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
  if (classifier_hidden < 1 || head_hidden < 1) throw ConfigError("hidden widths must be >= 1");
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0)) throw ConfigError("alpha1 and alpha2 must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("optimizer must be sgd or adam, got '" + optimizer + "'");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"encoder", c.encoder},
                     {"interaction", c.interaction},
                     {"n_classes", c.n_classes},
                     {"classifier_hidden", c.classifier_hidden},
                     {"head_hidden", c.head_hidden},
                     {"alpha1", c.alpha1},
                     {"alpha2", c.alpha2},
                     {"lr", c.lr},
                     {"momentum", c.momentum},
                     {"optimizer", c.optimizer},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"grad_clip", c.grad_clip},
                     {"batch", c.batch},
                     {"epochs", c.epochs},
                     {"seed", c.seed},
                     {"g2l", c.g2l},
                     {"l2g", c.l2g},
                     {"binary_target", c.binary_target},
                     {"topology", c.topology},
                     {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("encoder")) {
    EncoderConfig e = c.encoder;
    from_json(j.at("encoder"), e);
    c.encoder = e;
  }
  if (j.contains("interaction")) {
    InteractionConfig i = c.interaction;
    from_json(j.at("interaction"), i);
    c.interaction = i;
  }
  c.n_classes = j.value("n_classes", c.n_classes);
  c.classifier_hidden = j.value("classifier_hidden", c.classifier_hidden);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.alpha1 = j.value("alpha1", c.alpha1);
  c.alpha2 = j.value("alpha2", c.alpha2);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.g2l = j.value("g2l", c.g2l);
  c.l2g = j.value("l2g", c.l2g);
  c.binary_target = j.value("binary_target", c.binary_target);
  c.topology = j.value("topology", c.topology);
  c.threads = j.value("threads", c.threads);
}

ModelConfig desk_config() {
  ModelConfig c;
  c.encoder = EncoderConfig{};
  c.interaction = InteractionConfig{};
  c.n_classes = 10;
  c.encoder.frames = 10;
  c.encoder.reweight_residual = true;
  c.optimizer = "adam";
  c.lr = 0.003;
  c.alpha1 = 100.0;
  c.batch = 32;
  c.epochs = 30;
  return c;
}

ModelConfig full_config() {
  ModelConfig c;
  c.encoder.blocks = 9;
  c.encoder.pre_blocks = 5;
  c.encoder.embed_dim = 64;
  c.encoder.pre_dim = 64;
  c.encoder.post_dim = 64;
  c.encoder.heads = 4;
  c.encoder.frames = 60;
  c.encoder.jid_hidden = 64;
  c.encoder.ffn_hidden = 128;
  c.interaction.blocks = 3;
  c.interaction.shared_dim = 64;
  c.interaction.heads = 4;
  c.interaction.text_dim = 1536;
  c.interaction.post_dim = 64;
  c.interaction.mlp_hidden = 128;
  c.classifier_hidden = 128;
  c.head_hidden = 128;
  c.n_classes = 100;
  return c;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.encoder.blocks = 2;
  c.encoder.pre_blocks = 1;
  c.encoder.embed_dim = 8;
  c.encoder.pre_dim = 8;
  c.encoder.post_dim = 8;
  c.encoder.heads = 2;
  c.encoder.frames = 4;
  c.encoder.joints = 5;
  c.encoder.jid_hidden = 8;
  c.encoder.ffn_hidden = 16;
  c.interaction.blocks = 2;
  c.interaction.shared_dim = 8;
  c.interaction.heads = 2;
  c.interaction.text_dim = 8;
  c.interaction.post_dim = 8;
  c.interaction.mlp_hidden = 16;
  c.classifier_hidden = 8;
  c.head_hidden = 8;
  c.n_classes = 3;
  c.batch = 2;
  c.epochs = 1;
  c.topology = "";
  return c;
}

double loss_calibrate(const Vec& k_out, const Vec& k_gt) {
  if (k_out.size() != k_gt.size() || k_out.size() == 0) {
    throw std::invalid_argument("loss_calibrate: length mismatch (" + std::to_string(k_out.size()) + " vs " +
                                std::to_string(k_gt.size()) + ")");
  }
  return (k_out - k_gt).squaredNorm() / double(k_out.size());
}

double loss_ce(const Vec& y_hat, int y) {
  if (y < 0 || y >= y_hat.size()) throw std::invalid_argument("loss_ce: invalid class index " + std::to_string(y));
  return -std::log(y_hat[y]);
}

double loss_ce_logits(const Vec& logits, int y) {
  if (y < 0 || y >= logits.size()) {
    throw std::invalid_argument("loss_ce: invalid class index " + std::to_string(y));
  }
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits[y];
}

LossBreakdown loss_overall(double l_s, double l_calibrate, double l_c, double alpha1, double alpha2) {
  LossBreakdown b;
  b.l_s = l_s;
  b.l_calibrate = l_calibrate;
  b.l_c = l_c;
  b.alpha1 = alpha1;
  b.alpha2 = alpha2;
  b.l_overall = l_s + alpha1 * l_calibrate + alpha2 * l_c;
  return b;
}

CrossGlgModel::CrossGlgModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  encoder_ = SkeletonEncoder(config_.encoder, params_, rng);
  head_ = nn::add_mlp(params_, "skeleton_head", config_.encoder.post_dim, config_.head_hidden,
                      config_.encoder.post_dim, rng);
  guidance_ = GuidanceBranch(config_.interaction, params_, rng);
  classifier_ = nn::add_mlp(params_, "classifier", config_.encoder.post_dim, config_.classifier_hidden,
                            config_.n_classes, rng);
  params_.round_to_float();
}

void CrossGlgModel::load_params(const ParamSet& params) {
  if (params.size() != params_.size()) {
    throw ConfigError("parameter count " + std::to_string(params.size()) + " does not match architecture (" +
                      std::to_string(params_.size()) + ")");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params.name(i) != params_.name(i)) {
      throw ConfigError("parameter " + std::to_string(i) + " is '" + params.name(i) + "', expected '" +
                        params_.name(i) + "'");
    }
    if (params[i].rows() != params_[i].rows() || params[i].cols() != params_[i].cols()) {
      throw ConfigError("parameter '" + params.name(i) + "' has the wrong shape");
    }
    params_[i] = params[i];
  }
}

Mat CrossGlgModel::skeleton_feature(const Mat& f_bar_post, nn::MlpCache* cache) const {
  nn::MlpCache local;
  return nn::mlp(params_, head_, f_bar_post, cache ? *cache : local).colwise().mean();
}

Vec CrossGlgModel::class_logits(const Mat& feature, nn::MlpCache* cache) const {
  nn::MlpCache local;
  return nn::mlp(params_, classifier_, feature, cache ? *cache : local).row(0).transpose();
}

Vec CrossGlgModel::classify(const Mat& feature) const { return softmax(class_logits(feature)); }

EncoderOutput CrossGlgModel::encode(const Mat& frames, EncoderTrace* trace) const {
  return encoder_.forward(params_, frames, config_.g2l, trace);
}

Mat CrossGlgModel::extract_feature(const Mat& frames) const {
  return skeleton_feature(encode(frames).f_bar_post);
}

LossWeights CrossGlgModel::default_weights() const {
  return LossWeights{1.0, config_.effective_alpha1(), config_.effective_alpha2()};
}

LossBreakdown CrossGlgModel::forward(const Mat& frames, int class_index, const Vec& k_gt, const Mat* text,
                                     SampleTrace* trace) const {
  SampleTrace local;
  SampleTrace& tr = trace ? *trace : local;
  tr.encoded = encoder_.forward(params_, frames, config_.g2l, &tr.encoder);
  tr.f_out_s = skeleton_feature(tr.encoded.f_bar_post, &tr.head);
  tr.logits_s = class_logits(tr.f_out_s, &tr.cls_s);
  const double l_s = loss_ce_logits(tr.logits_s, class_index);

  double l_cal = 0.0;
  if (config_.g2l) {
    if (k_gt.size() != tr.encoded.k_out.size()) {
      throw DataError("key-joint target has " + std::to_string(k_gt.size()) + " entries, expected " +
                      std::to_string(tr.encoded.k_out.size()));
    }
    l_cal = loss_calibrate(tr.encoded.k_out, k_gt);
  }

  double l_c = 0.0;
  tr.guided = false;
  if (config_.l2g) {
    if (text == nullptr) throw DataError("missing text embeddings for class index " + std::to_string(class_index));
    tr.f_out_c = guidance_.forward(params_, *text, tr.encoded.f_bar_post, &tr.guidance);
    tr.logits_c = class_logits(tr.f_out_c, &tr.cls_c);
    l_c = loss_ce_logits(tr.logits_c, class_index);
    tr.guided = true;
  }
  return loss_overall(l_s, l_cal, l_c, config_.effective_alpha1(), config_.effective_alpha2());
}

LossBreakdown CrossGlgModel::forward_backward(const Mat& frames, int class_index, const Vec& k_gt, const Mat* text,
                                              const LossWeights& weights, double scale, ParamSet& grads) const {
  SampleTrace tr;
  const LossBreakdown losses = forward(frames, class_index, k_gt, text, &tr);
  const int post_dim = config_.encoder.post_dim;
  const int joints = config_.encoder.joints;

  Mat d_f_bar_post = Mat::Zero(joints, post_dim);
  const auto ce_grad = [&](const Vec& logits, double w) {
    Vec d = softmax(logits);
    d[class_index] -= 1.0;
    return Mat((w * scale * d).transpose());
  };

  if (weights.skeleton != 0.0) {
    const Mat d_feature = nn::mlp_backward(params_, grads, classifier_, tr.cls_s, ce_grad(tr.logits_s, weights.skeleton));
    const Mat d_rows = d_feature.replicate(joints, 1) / double(joints);
    d_f_bar_post += nn::mlp_backward(params_, grads, head_, tr.head, d_rows);
  }
  if (tr.guided && weights.guidance != 0.0) {
    const Mat d_feature = nn::mlp_backward(params_, grads, classifier_, tr.cls_c, ce_grad(tr.logits_c, weights.guidance));
    d_f_bar_post += guidance_.backward(params_, grads, tr.guidance, d_feature);
  }
  Vec d_k_out = Vec::Zero(joints);
  if (config_.g2l && weights.calibrate != 0.0) {
    d_k_out = weights.calibrate * scale * 2.0 * (tr.encoded.k_out - k_gt) / double(joints);
  }
  encoder_.backward(params_, grads, tr.encoder, tr.encoded, d_f_bar_post, d_k_out);
  return losses;
}

}  // namespace crossglg
