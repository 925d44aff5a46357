#include "crossglg/training.hpp"

#include "crossglg/errors.hpp"
#include "crossglg/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>

namespace crossglg {

namespace {

static_assert(sizeof(float) == 4, "float32 checkpoints need 4-byte floats");

Rng epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(epoch), 0x5eedu};
  return Rng(seq);
}

nlohmann::json losses_to_json(const LossBreakdown& b) {
  return {{"L_s", b.l_s}, {"L_c", b.l_c}, {"L_calibrate", b.l_calibrate}, {"L_overall", b.l_overall},
          {"alpha1", b.alpha1}, {"alpha2", b.alpha2}};
}

LossBreakdown losses_from_json(const nlohmann::json& j) {
  LossBreakdown b;
  b.l_s = j.at("L_s").get<double>();
  b.l_c = j.at("L_c").get<double>();
  b.l_calibrate = j.at("L_calibrate").get<double>();
  b.l_overall = j.at("L_overall").get<double>();
  b.alpha1 = j.at("alpha1").get<double>();
  b.alpha2 = j.at("alpha2").get<double>();
  return b;
}

void append_tensors(const ParamSet& set, const std::string& group, nlohmann::json& list, std::vector<float>& blob) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Mat& m = set[i];
    list.push_back({{"name", set.name(i)},
                    {"group", group},
                    {"shape", {m.rows(), m.cols()}},
                    {"dtype", "float32"},
                    {"offset", blob.size() * sizeof(float)},
                    {"count", m.size()}});
    for (Eigen::Index k = 0; k < m.size(); ++k) blob.push_back(static_cast<float>(m.data()[k]));
  }
}

// Per-sample gradients are computed independently and summed in sample
// order, so the result does not depend on the worker count.
std::vector<LossBreakdown> run_samples(const CrossGlgModel& model, const TrainingSet& set,
                                       const std::vector<std::size_t>& batch, std::vector<ParamSet>& grads) {
  const std::size_t n = batch.size();
  std::vector<LossBreakdown> losses(n);
  const LossWeights weights = model.default_weights();
  const double scale = 1.0 / double(n);
  const auto one = [&](std::size_t i) {
    const std::size_t s = batch[i];
    const int cls = set.targets[s];
    static const Vec kEmpty;
    const Vec& k_gt = set.k_gt.empty() ? kEmpty : set.k_gt[std::size_t(cls)];
    const Mat* text = set.text.empty() ? nullptr : &set.text[std::size_t(cls)];
    losses[i] = model.forward_backward(set.frames[s], cls, k_gt, text, weights, scale, grads[i]);
  };
  parallel_for(n, model.config().threads, one);
  return losses;
}

}  // namespace

TrainingSet make_training_set(const Dataset& dataset, const SkeletonTopology& topology, const ModelConfig& config,
                              const std::map<int, KeyJointDistribution>& key_joints,
                              const std::map<int, JointTextEmbeddings>& text) {
  if (topology.joint_count() != config.encoder.joints) {
    throw ConfigError("topology '" + topology.name + "' has " + std::to_string(topology.joint_count()) +
                      " joints but the encoder expects " + std::to_string(config.encoder.joints));
  }
  if (!dataset.topology_name.empty() && dataset.topology_name != topology.name) {
    throw DataError("dataset topology '" + dataset.topology_name + "' does not match '" + topology.name + "'");
  }
  TrainingSet set;
  set.class_labels = dataset.present_classes();
  if (int(set.class_labels.size()) != config.n_classes) {
    throw ConfigError("training data has " + std::to_string(set.class_labels.size()) + " classes but n_classes is " +
                      std::to_string(config.n_classes));
  }
  std::map<int, int> position;
  for (std::size_t i = 0; i < set.class_labels.size(); ++i) position[set.class_labels[i]] = int(i);

  if (config.g2l) {
    for (int label : set.class_labels) {
      const auto it = key_joints.find(label);
      if (it == key_joints.end()) throw DataError("missing description for label " + std::to_string(label));
      Vec target(config.encoder.joints);
      if (int(it->second.key.size()) != config.encoder.joints) {
        throw DataError("key-joint vector for label " + std::to_string(label) + " has the wrong length");
      }
      if (config.binary_target) {
        for (int j = 0; j < target.size(); ++j) target[j] = it->second.key[std::size_t(j)];
      } else {
        target = it->second.target;
      }
      set.k_gt.push_back(target);
    }
  }
  if (config.l2g) {
    for (int label : set.class_labels) {
      const auto it = text.find(label);
      if (it == text.end()) throw DataError("missing text embeddings for label " + std::to_string(label));
      const Mat& rows = it->second.rows;
      if (rows.rows() != config.encoder.joints || rows.cols() != config.interaction.text_dim) {
        throw DataError("text embeddings for label " + std::to_string(label) + " are " + std::to_string(rows.rows()) +
                        "x" + std::to_string(rows.cols()) + ", expected " + std::to_string(config.encoder.joints) +
                        "x" + std::to_string(config.interaction.text_dim));
      }
      set.text.push_back(rows);
    }
  }
  for (const auto& seq : dataset.sequences) {
    set.frames.push_back(prepare_frames(seq, topology, config.encoder.frames));
    set.targets.push_back(position.at(seq.label));
  }
  return set;
}

ModelCheckpoint initialize_checkpoint(const ModelConfig& config, const std::vector<int>& class_labels) {
  if (int(class_labels.size()) != config.n_classes) {
    throw ConfigError("class label list has " + std::to_string(class_labels.size()) + " entries, n_classes is " +
                      std::to_string(config.n_classes));
  }
  const CrossGlgModel model(config);
  ModelCheckpoint ckpt;
  ckpt.config = config;
  ckpt.class_labels = class_labels;
  ckpt.params = model.params();
  ckpt.optimizer = make_optimizer_state(config, ckpt.params);
  ckpt.meta.frozen = config.epochs == 0;
  return ckpt;
}

double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total) {
  if (total == 0) return base_lr;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / double(total)));
}

OptimizerState make_optimizer_state(const ModelConfig& config, const ParamSet& params) {
  OptimizerState state;
  state.first = params.zeros_like();
  if (config.optimizer == "adam") state.second = params.zeros_like();
  return state;
}

LossBreakdown train_step(const CrossGlgModel& model, ParamSet& params, OptimizerState& state, const TrainingSet& set,
                         const std::vector<std::size_t>& batch, double lr, std::uint64_t step) {
  std::vector<ParamSet> grads(batch.size(), params.zeros_like());
  const auto losses = run_samples(model, set, batch, grads);
  ParamSet total = params.zeros_like();
  for (const auto& g : grads) total.add_scaled(g, 1.0);

  const double clip = model.config().grad_clip;
  if (clip > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < total.size(); ++i) sq += total[i].squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > clip) {
      for (std::size_t i = 0; i < total.size(); ++i) total[i] *= clip / norm;
    }
  }
  const ModelConfig& config = model.config();
  const double beta1 = config.momentum;
  if (config.optimizer == "adam") {
    const double beta2 = config.adam_beta2;
    const double t = double(step + 1);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first[i] = beta1 * state.first[i] + (1.0 - beta1) * total[i];
      state.second[i] = beta2 * state.second[i] + (1.0 - beta2) * total[i].cwiseAbs2();
      params[i].array() -=
          lr * (state.first[i].array() / c1) / ((state.second[i].array() / c2).sqrt() + config.adam_eps);
    }
    state.second.round_to_float();
  } else {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first[i] = beta1 * state.first[i] + total[i];
      params[i] -= lr * state.first[i];
    }
  }
  params.round_to_float();
  state.first.round_to_float();

  double l_s = 0.0, l_cal = 0.0, l_c = 0.0;
  for (const auto& b : losses) {
    l_s += b.l_s;
    l_cal += b.l_calibrate;
    l_c += b.l_c;
  }
  const double n = double(losses.size());
  return loss_overall(l_s / n, l_cal / n, l_c / n, model.config().effective_alpha1(),
                      model.config().effective_alpha2());
}

void continue_training(ModelCheckpoint& ckpt, const TrainingSet& set, const TrainOptions& options) {
  if (ckpt.meta.frozen) throw ConfigError("checkpoint is frozen; refusing to train further");
  const ModelConfig& config = ckpt.config;
  if (set.class_labels != ckpt.class_labels) throw DataError("training classes differ from the checkpoint's classes");
  if (set.size() == 0 && config.epochs > 0) throw DataError("training set is empty");

  CrossGlgModel model(config);
  model.load_params(ckpt.params);
  const std::uint64_t per_epoch = (set.size() + std::size_t(config.batch) - 1) / std::size_t(config.batch);
  const std::uint64_t total = per_epoch * std::uint64_t(config.epochs);
  const int stop = options.stop_after_epoch < 0 ? config.epochs : std::min(options.stop_after_epoch, config.epochs);

  std::vector<std::size_t> order(set.size());
  for (int epoch = ckpt.meta.epoch; epoch < stop; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = epoch_rng(config.seed, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double l_s = 0.0, l_cal = 0.0, l_c = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(config.batch));
      const std::vector<std::size_t> batch(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(end));
      const double lr = cosine_lr(config.lr, ckpt.meta.step, total);
      const LossBreakdown b = train_step(model, model.params(), ckpt.optimizer, set, batch, lr, ckpt.meta.step);
      if (!std::isfinite(b.l_overall)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(ckpt.meta.step));
      }
      ckpt.meta.steps.push_back(StepLog{epoch, ckpt.meta.step, lr, b});
      ++ckpt.meta.step;
      l_s += b.l_s;
      l_cal += b.l_calibrate;
      l_c += b.l_c;
      ++batches;
    }
    const double n = std::max(batches, 1);
    EpochLog log{epoch, loss_overall(l_s / n, l_cal / n, l_c / n, config.effective_alpha1(),
                                     config.effective_alpha2())};
    ckpt.meta.epochs.push_back(log);
    ckpt.meta.epoch = epoch + 1;
    ckpt.params = model.params();
    if (options.on_epoch) options.on_epoch(log);
  }
  ckpt.params = model.params();
  if (ckpt.meta.epoch >= config.epochs) ckpt.meta.frozen = true;
}

ModelCheckpoint train(const ModelConfig& config, const TrainingSet& set, const TrainOptions& options) {
  ModelConfig c = config;
  const bool zero_epochs = c.epochs == 0;
  ModelCheckpoint ckpt = initialize_checkpoint(c, set.class_labels);
  if (!zero_epochs) continue_training(ckpt, set, options);
  return ckpt;
}

CrossGlgModel model_from_checkpoint(const ModelCheckpoint& checkpoint) {
  CrossGlgModel model(checkpoint.config);
  model.load_params(checkpoint.params);
  return model;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<float> blob;
  append_tensors(ckpt.params, "params", tensors, blob);
  append_tensors(ckpt.optimizer.first, "optimizer.first", tensors, blob);
  append_tensors(ckpt.optimizer.second, "optimizer.second", tensors, blob);

  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : ckpt.meta.epochs) epochs.push_back({{"epoch", e.epoch}, {"losses", losses_to_json(e.losses)}});
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : ckpt.meta.steps) {
    steps.push_back({{"epoch", s.epoch}, {"step", s.step}, {"lr", s.lr}, {"losses", losses_to_json(s.losses)}});
  }
  nlohmann::json manifest = {{"format", "crossglg-checkpoint"},
                             {"version", 1},
                             {"byte_order", "little"},
                             {"blob", "params.bin"},
                             {"config", ckpt.config},
                             {"class_labels", ckpt.class_labels},
                             {"metadata",
                              {{"epoch", ckpt.meta.epoch},
                               {"step", ckpt.meta.step},
                               {"frozen", ckpt.meta.frozen},
                               {"seed", ckpt.config.seed},
                               {"epochs", epochs},
                               {"steps", steps}}},
                             {"tensors", tensors}};

  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
  bin.write(reinterpret_cast<const char*>(blob.data()), std::streamsize(blob.size() * sizeof(float)));
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(1) << '\n';
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("checkpoint manifest not found: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", std::string()) != "crossglg-checkpoint") {
    throw DataError("not a checkpoint manifest: " + manifest_path.string());
  }

  ModelCheckpoint ckpt;
  ckpt.config = ModelConfig{};
  from_json(manifest.at("config"), ckpt.config);
  ckpt.class_labels = manifest.at("class_labels").get<std::vector<int>>();
  const auto& meta = manifest.at("metadata");
  ckpt.meta.epoch = meta.at("epoch").get<int>();
  ckpt.meta.step = meta.at("step").get<std::uint64_t>();
  ckpt.meta.frozen = meta.at("frozen").get<bool>();
  for (const auto& e : meta.at("epochs")) {
    ckpt.meta.epochs.push_back(EpochLog{e.at("epoch").get<int>(), losses_from_json(e.at("losses"))});
  }
  for (const auto& s : meta.at("steps")) {
    ckpt.meta.steps.push_back(StepLog{s.at("epoch").get<int>(), s.at("step").get<std::uint64_t>(),
                                      s.at("lr").get<double>(), losses_from_json(s.at("losses"))});
  }

  const auto blob_path = dir / manifest.value("blob", std::string("params.bin"));
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) throw DataError("checkpoint blob not found: " + blob_path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  for (const auto& t : manifest.at("tensors")) {
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    const auto offset = t.at("offset").get<std::size_t>();
    if (shape.size() != 2) throw DataError("tensor '" + t.at("name").get<std::string>() + "' is not 2-D");
    const std::size_t count = std::size_t(shape[0] * shape[1]);
    if (offset + count * sizeof(float) > bytes.size()) {
      throw DataError("tensor '" + t.at("name").get<std::string>() + "' exceeds the blob");
    }
    Mat m(shape[0], shape[1]);
    for (std::size_t k = 0; k < count; ++k) {
      float f;
      std::memcpy(&f, bytes.data() + offset + k * sizeof(float), sizeof(float));
      m.data()[k] = f;
    }
    const std::string group = t.value("group", std::string("params"));
    if (!m.allFinite()) throw DataError("tensor '" + t.at("name").get<std::string>() + "' has non-finite values");
    ParamSet* target = &ckpt.params;
    if (group == "optimizer.first") {
      target = &ckpt.optimizer.first;
    } else if (group == "optimizer.second") {
      target = &ckpt.optimizer.second;
    } else if (group != "params") {
      throw DataError("unknown tensor group '" + group + "'");
    }
    target->add(t.at("name").get<std::string>(), std::move(m));
  }
  if (ckpt.optimizer.first.size() == 0) ckpt.optimizer = make_optimizer_state(ckpt.config, ckpt.params);
  // Validates names and shapes against the architecture.
  model_from_checkpoint(ckpt);
  return ckpt;
}

void write_loss_log(const std::vector<EpochLog>& epochs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  out << "epoch,L_s,L_c,L_calibrate,L_overall\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.losses.l_s << ',' << e.losses.l_c << ',' << e.losses.l_calibrate << ','
        << e.losses.l_overall << '\n';
  }
}

GradientCheckReport check_gradients(const ModelConfig& config, std::uint64_t seed, double step) {
  const auto started = std::chrono::steady_clock::now();
  ModelConfig c = config;
  c.seed = seed;
  c.threads = 1;
  CrossGlgModel model(c);
  // Unrounded double parameters so the finite differences see a smooth loss.
  {
    Rng jitter(seed + 17);
    std::uniform_real_distribution<double> tiny(-1e-3, 1e-3);
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      Mat& m = model.params()[i];
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] += tiny(jitter);
    }
  }

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, c.n_classes - 1);
  const int joints = c.encoder.joints;
  TrainingSet set;
  for (int k = 0; k < c.n_classes; ++k) {
    set.class_labels.push_back(k);
    std::vector<int> key(std::size_t(joints), 0);
    for (int j = 0; j < joints; ++j) key[std::size_t(j)] = (gauss(rng) > 0.0) ? 1 : 0;
    key[std::size_t(k % joints)] = 1;
    Vec target(joints);
    const double ones = std::accumulate(key.begin(), key.end(), 0.0);
    for (int j = 0; j < joints; ++j) target[j] = c.binary_target ? key[std::size_t(j)] : key[std::size_t(j)] / ones;
    set.k_gt.push_back(target);
    Mat text(joints, c.interaction.text_dim);
    for (Eigen::Index e = 0; e < text.size(); ++e) text.data()[e] = gauss(rng);
    set.text.push_back(text);
  }
  for (int s = 0; s < c.batch; ++s) {
    Mat frames(Eigen::Index(c.encoder.frames) * joints, 3);
    for (Eigen::Index e = 0; e < frames.size(); ++e) frames.data()[e] = gauss(rng);
    set.frames.push_back(frames);
    set.targets.push_back(pick_class(rng));
  }
  std::vector<std::size_t> batch(set.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});

  const LossWeights weights = model.default_weights();
  const auto batch_loss = [&]() {
    double total = 0.0;
    for (std::size_t s : batch) {
      const int cls = set.targets[s];
      total += model.forward(set.frames[s], cls, set.k_gt[std::size_t(cls)], &set.text[std::size_t(cls)]).l_overall;
    }
    return total / double(batch.size());
  };

  ParamSet analytic = model.params().zeros_like();
  for (std::size_t s : batch) {
    const int cls = set.targets[s];
    model.forward_backward(set.frames[s], cls, set.k_gt[std::size_t(cls)], &set.text[std::size_t(cls)], weights,
                           1.0 / double(batch.size()), analytic);
  }

  GradientCheckReport report;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    TensorGradientCheck entry;
    entry.name = model.params().name(i);
    Mat& p = model.params()[i];
    const Mat& a = analytic[i];
    entry.elements = std::size_t(p.size());
    entry.max_abs_analytic = a.cwiseAbs().maxCoeff();
    entry.exact_zero = entry.max_abs_analytic == 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + step;
      const double plus = batch_loss();
      p.data()[k] = saved - step;
      const double minus = batch_loss();
      p.data()[k] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double an = a.data()[k];
      const double denom = std::max({std::abs(an), std::abs(numeric), 1e-6});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(an - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.tensors.push_back(entry);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

nlohmann::json to_json(const GradientCheckReport& report) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : report.tensors) {
    tensors.push_back({{"name", t.name},
                       {"elements", t.elements},
                       {"max_rel_error", t.max_rel_error},
                       {"max_abs_analytic", t.max_abs_analytic},
                       {"exact_zero", t.exact_zero}});
  }
  return {{"max_rel_error", report.max_rel_error}, {"seconds", report.seconds}, {"tensors", tensors}};
}

}  // namespace crossglg
