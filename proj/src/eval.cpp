#include "crossglg/eval.hpp"

#include "crossglg/errors.hpp"
#include "crossglg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace crossglg {

namespace {

Rng derived_rng(std::uint64_t seed, std::uint32_t stream, std::uint32_t tag) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), stream, tag};
  return Rng(seq);
}

constexpr std::uint32_t kEpisodeTag = 0xE915u;
constexpr std::uint32_t kSamplingTag = 0xDC5Au;

int argmax_lowest(const Vec& scores) {
  int best = 0;
  for (int i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

void check_topology(const ModelCheckpoint& ckpt, const Dataset& data, const SkeletonTopology& topology) {
  if (!ckpt.config.topology.empty() && ckpt.config.topology != topology.name) {
    throw DataError("topology mismatch: checkpoint uses '" + ckpt.config.topology + "', got '" + topology.name + "'");
  }
  if (!data.topology_name.empty() && data.topology_name != topology.name) {
    throw DataError("topology mismatch: dataset uses '" + data.topology_name + "', got '" + topology.name + "'");
  }
  if (topology.joint_count() != ckpt.config.encoder.joints) {
    throw DataError("topology mismatch: " + std::to_string(topology.joint_count()) + " joints, checkpoint expects " +
                    std::to_string(ckpt.config.encoder.joints));
  }
}

}  // namespace

FeatureSet extract_features(const ModelCheckpoint& checkpoint, const Dataset& data, const SkeletonTopology& topology) {
  if (!checkpoint.meta.frozen) throw ConfigError("checkpoint is not frozen; finish training before evaluation");
  check_topology(checkpoint, data, topology);
  const CrossGlgModel model = model_from_checkpoint(checkpoint);
  FeatureSet out;
  out.ids.resize(data.size());
  out.labels.resize(data.size());
  out.features.resize(data.size());
  parallel_for(data.size(), checkpoint.config.threads, [&](std::size_t i) {
    const auto& seq = data.sequences[i];
    const Mat frames = prepare_frames(seq, topology, checkpoint.config.encoder.frames);
    out.ids[i] = seq.id;
    out.labels[i] = seq.label;
    out.features[i] = model.extract_feature(frames).row(0).transpose();
  });
  return out;
}

Episode sample_episode(const std::vector<int>& labels, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Episode ep;
  ep.seed = seed;
  Rng rng = derived_rng(seed, 0, kEpisodeTag);
  std::vector<bool> is_support(labels.size(), false);
  for (const auto& [label, members] : by_class) {
    if (members.size() < 2) {
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                      " sample(s); one-shot episodes need at least 2");
    }
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const std::size_t chosen = members[pick(rng)];
    ep.classes.push_back(label);
    ep.support.push_back(chosen);
    is_support[chosen] = true;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!is_support[i]) ep.query.push_back(i);
  }
  return ep;
}

Vec tukey_transform(const Vec& v, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("tukey_transform: lambda must be >= 0");
  if (lambda == 0.0) return (v.array() + 1e-6).log().matrix();
  if (lambda == 1.0) return v;
  return v.array().pow(lambda).matrix();
}

FeatureShift fit_shift(const std::vector<Vec>& base_features) {
  FeatureShift shift;
  if (base_features.empty()) return shift;
  double m = std::numeric_limits<double>::infinity();
  for (const auto& f : base_features) m = std::min(m, f.minCoeff());
  shift.minimum = m;
  return shift;
}

BaseStatistics compute_base_statistics(const std::vector<Vec>& features, const std::vector<int>& labels,
                                       bool diagonal) {
  if (features.size() != labels.size()) throw std::invalid_argument("features and labels differ in length");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  BaseStatistics stats;
  for (const auto& [label, members] : by_class) {
    const Eigen::Index d = features[members.front()].size();
    Vec mean = Vec::Zero(d);
    for (std::size_t i : members) mean += features[i];
    mean /= double(members.size());
    Mat cov = Mat::Zero(d, d);
    if (members.size() > 1) {
      for (std::size_t i : members) {
        const Vec c = features[i] - mean;
        cov.noalias() += c * c.transpose();
      }
      cov /= double(members.size() - 1);
    }
    if (diagonal) cov = Mat(cov.diagonal().asDiagonal());
    stats.labels.push_back(label);
    stats.means.push_back(mean);
    stats.covariances.push_back(cov);
    stats.counts.push_back(int(members.size()));
  }
  return stats;
}

CalibratedDistribution dc_calibrate(const Vec& support, const BaseStatistics& stats, int k, double alpha) {
  if (stats.means.empty()) throw std::invalid_argument("dc_calibrate: empty base statistics");
  if (k < 1 || std::size_t(k) > stats.means.size()) {
    throw std::invalid_argument("dc_calibrate: k must be in [1, " + std::to_string(stats.means.size()) + "]");
  }
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t i = 0; i < stats.means.size(); ++i) dist.emplace_back((stats.means[i] - support).norm(), i);
  std::stable_sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  CalibratedDistribution out;
  const Eigen::Index d = support.size();
  out.mean = support;
  out.covariance = Mat::Zero(d, d);
  for (int j = 0; j < k; ++j) {
    const std::size_t i = dist[std::size_t(j)].second;
    out.selected.push_back(i);
    out.mean += stats.means[i];
    out.covariance += stats.covariances[i];
  }
  out.mean /= double(k + 1);
  out.covariance /= double(k);
  out.covariance.diagonal().array() += alpha;
  return out;
}

void DcOptions::validate() const {
  if (k < 1) throw ConfigError("dc: k must be >= 1");
  if (alpha < 0.0) throw ConfigError("dc: alpha must be >= 0");
  if (lambda < 0.0) throw ConfigError("dc: lambda must be >= 0");
  if (n_samples < 0) throw ConfigError("dc: n_samples must be >= 0");
  if (steps < 1) throw ConfigError("dc: steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("dc: lr must be > 0");
}

int LogisticModel::predict(const Vec& x) const {
  const Vec scores = weights.transpose() * x + bias;
  return argmax_lowest(scores);
}

LogisticModel fit_logistic(const std::vector<Vec>& xs, const std::vector<int>& ys, int n_classes, int steps,
                           double lr, double momentum) {
  if (xs.empty()) throw std::invalid_argument("fit_logistic: no training points");
  const Eigen::Index d = xs.front().size();
  const Eigen::Index n = Eigen::Index(xs.size());
  Mat x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = xs[std::size_t(i)].transpose();

  LogisticModel model;
  model.weights = Mat::Zero(d, n_classes);
  model.bias = Vec::Zero(n_classes);
  Mat vel_w = Mat::Zero(d, n_classes);
  Vec vel_b = Vec::Zero(n_classes);
  for (int step = 0; step < steps; ++step) {
    Mat p = x * model.weights;
    p.rowwise() += model.bias.transpose();
    softmax_rows_inplace(p);
    for (Eigen::Index i = 0; i < n; ++i) p(i, ys[std::size_t(i)]) -= 1.0;
    p /= double(n);
    vel_w = momentum * vel_w + x.transpose() * p;
    vel_b = momentum * vel_b + p.colwise().sum().transpose();
    model.weights -= lr * vel_w;
    model.bias -= lr * vel_b;
  }
  return model;
}

std::vector<int> dc_classify(const std::vector<Vec>& support, const std::vector<int>& classes,
                             const std::vector<Vec>& queries, const BaseStatistics& stats, const DcOptions& options,
                             std::uint64_t seed) {
  options.validate();
  if (support.size() != classes.size() || support.empty()) {
    throw std::invalid_argument("dc_classify: one support feature per class required");
  }
  const double alpha = std::max(options.alpha, kMinCovarianceRidge);
  const int k = std::min<int>(options.k, int(stats.means.size()));
  std::vector<Vec> xs;
  std::vector<int> ys;
  for (std::size_t c = 0; c < support.size(); ++c) {
    xs.push_back(support[c]);
    ys.push_back(int(c));
    if (options.n_samples == 0) continue;
    const auto cal = dc_calibrate(support[c], stats, k, alpha);
    Mat cov = cal.covariance;
    if (options.diagonal) cov = Mat(cov.diagonal().asDiagonal());
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) {
      cov.diagonal().array() += kMinCovarianceRidge;
      llt.compute(cov);
    }
    const Mat l = llt.matrixL();
    Rng rng = derived_rng(seed, std::uint32_t(c), kSamplingTag);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int s = 0; s < options.n_samples; ++s) {
      Vec z(cal.mean.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = gauss(rng);
      xs.push_back(cal.mean + l * z);
      ys.push_back(int(c));
    }
  }
  const auto model = fit_logistic(xs, ys, int(classes.size()), options.steps, options.lr, options.momentum);
  std::vector<int> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(classes[std::size_t(model.predict(q))]);
  return out;
}

std::vector<int> prototype_classify(const std::vector<Vec>& support, const std::vector<int>& classes,
                                    const std::vector<Vec>& queries) {
  if (support.size() != classes.size() || support.empty()) {
    throw std::invalid_argument("prototype_classify: one support feature per class required");
  }
  std::vector<int> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    Vec scores(Eigen::Index(support.size()));
    const double qn = q.norm();
    bool any_zero = qn == 0.0;
    for (const auto& s : support) any_zero = any_zero || s.norm() == 0.0;
    for (std::size_t c = 0; c < support.size(); ++c) {
      scores[Eigen::Index(c)] =
          any_zero ? -(q - support[c]).norm() : q.dot(support[c]) / (qn * support[c].norm());
    }
    out.push_back(classes[std::size_t(argmax_lowest(scores))]);
  }
  return out;
}

std::string to_string(ClassifierKind kind) { return kind == ClassifierKind::dc ? "dc" : "prototype"; }

ClassifierKind parse_classifier(const std::string& name) {
  if (name == "dc") return ClassifierKind::dc;
  if (name == "prototype") return ClassifierKind::prototype;
  throw ConfigError("unknown classifier '" + name + "' (expected dc or prototype)");
}

EvalReport evaluate_features(const FeatureSet& base, const FeatureSet& novel, const EvalOptions& options) {
  if (options.episodes < 1) throw ConfigError("episodes must be >= 1");
  if (options.classifier == ClassifierKind::dc) {
    options.dc.validate();
    if (base.size() == 0) throw DataError("distribution calibration needs base-class features");
  }
  const FeatureShift shift = fit_shift(base.features);
  const auto transform = [&](const Vec& v) { return tukey_transform(shift.apply(v), options.dc.lambda); };

  BaseStatistics stats;
  if (options.classifier == ClassifierKind::dc) {
    std::vector<Vec> transformed;
    transformed.reserve(base.size());
    for (const auto& f : base.features) transformed.push_back(transform(f));
    stats = compute_base_statistics(transformed, base.labels, options.dc.diagonal);
  }
  std::vector<Vec> novel_t;
  if (options.classifier == ClassifierKind::dc) {
    for (const auto& f : novel.features) novel_t.push_back(transform(f));
  }
  const std::vector<Vec>& pool = options.classifier == ClassifierKind::dc ? novel_t : novel.features;

  const std::size_t n_ep = std::size_t(options.episodes);
  std::vector<Episode> episodes(n_ep);
  std::vector<std::vector<int>> predictions(n_ep);
  parallel_for(n_ep, options.threads, [&](std::size_t e) {
    const std::uint64_t seed = options.seed + e;
    episodes[e] = sample_episode(novel.labels, seed);
    const Episode& ep = episodes[e];
    std::vector<Vec> support, queries;
    for (std::size_t i : ep.support) support.push_back(pool[i]);
    for (std::size_t i : ep.query) queries.push_back(pool[i]);
    predictions[e] = options.classifier == ClassifierKind::dc
                         ? dc_classify(support, ep.classes, queries, stats, options.dc, seed)
                         : prototype_classify(support, ep.classes, queries);
  });

  EvalReport report;
  report.classifier = to_string(options.classifier);
  report.classes = episodes.front().classes;
  std::map<int, std::size_t> position;
  for (std::size_t i = 0; i < report.classes.size(); ++i) position[report.classes[i]] = i;
  report.confusion.assign(report.classes.size(), std::vector<std::size_t>(report.classes.size(), 0));
  std::vector<std::size_t> class_total(report.classes.size(), 0), class_correct(report.classes.size(), 0);
  double acc_sum = 0.0;
  for (std::size_t e = 0; e < n_ep; ++e) {
    const Episode& ep = episodes[e];
    std::size_t correct = 0;
    for (std::size_t q = 0; q < ep.query.size(); ++q) {
      const std::size_t truth = position.at(novel.labels[ep.query[q]]);
      const std::size_t pred = position.at(predictions[e][q]);
      ++report.confusion[truth][pred];
      ++class_total[truth];
      if (truth == pred) {
        ++correct;
        ++class_correct[truth];
      }
    }
    const double acc = ep.query.empty() ? 0.0 : double(correct) / double(ep.query.size());
    report.episode_accuracy.push_back(acc);
    report.seeds.push_back(ep.seed);
    report.correct += correct;
    report.total += ep.query.size();
    acc_sum += acc;
  }
  report.accuracy = acc_sum / double(n_ep);
  for (std::size_t i = 0; i < report.classes.size(); ++i) {
    report.per_class_accuracy[report.classes[i]] =
        class_total[i] == 0 ? 0.0 : double(class_correct[i]) / double(class_total[i]);
  }
  report.config = {{"classifier", report.classifier},
                   {"episodes", options.episodes},
                   {"seed", options.seed},
                   {"dc",
                    {{"k", options.dc.k},
                     {"alpha", options.dc.alpha},
                     {"lambda", options.dc.lambda},
                     {"n_samples", options.dc.n_samples},
                     {"steps", options.dc.steps},
                     {"lr", options.dc.lr},
                     {"momentum", options.dc.momentum},
                     {"diagonal", options.dc.diagonal}}}};
  return report;
}

EvalReport evaluate(const ModelCheckpoint& checkpoint, const Dataset& base, const Dataset& novel,
                    const SkeletonTopology& topology, const EvalOptions& options) {
  const FeatureSet base_features =
      options.classifier == ClassifierKind::dc ? extract_features(checkpoint, base, topology) : FeatureSet{};
  const FeatureSet novel_features = extract_features(checkpoint, novel, topology);
  return evaluate_features(base_features, novel_features, options);
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& [label, acc] : report.per_class_accuracy) {
    per_class.push_back({{"label", label}, {"accuracy", acc}});
  }
  return {{"classifier", report.classifier},
          {"accuracy", report.accuracy},
          {"correct", report.correct},
          {"total", report.total},
          {"episodes", report.episode_accuracy.size()},
          {"episode_accuracy", report.episode_accuracy},
          {"seeds", report.seeds},
          {"classes", report.classes},
          {"per_class", per_class},
          {"confusion", report.confusion},
          {"config", report.config}};
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(report).dump(2) << '\n';
}

KeyJointMass key_joint_mass(const ModelCheckpoint& checkpoint, const Dataset& data, const SkeletonTopology& topology) {
  check_topology(checkpoint, data, topology);
  const CrossGlgModel model = model_from_checkpoint(checkpoint);
  const int joints = topology.joint_count();
  std::vector<double> mass(data.size(), 0.0), uniform(data.size(), 0.0);
  parallel_for(data.size(), checkpoint.config.threads, [&](std::size_t i) {
    const auto& seq = data.sequences[i];
    const auto it = data.key_joint_truth.find(seq.label);
    if (it == data.key_joint_truth.end()) {
      throw DataError("no ground-truth key joints for label " + std::to_string(seq.label));
    }
    const Vec k = model.encode(prepare_frames(seq, topology, checkpoint.config.encoder.frames)).k_out;
    int count = 0;
    for (int j = 0; j < joints; ++j) {
      if (it->second[std::size_t(j)] != 0) {
        mass[i] += k[j];
        ++count;
      }
    }
    uniform[i] = double(count) / double(joints);
  });
  KeyJointMass out;
  out.samples = data.size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.mass += mass[i];
    out.uniform += uniform[i];
  }
  if (out.samples > 0) {
    out.mass /= double(out.samples);
    out.uniform /= double(out.samples);
  }
  return out;
}

}  // namespace crossglg
