#pragma once

#include "crossglg/dataset.hpp"
#include "crossglg/tensor.hpp"
#include "crossglg/topology.hpp"
#include "crossglg/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace crossglg {

struct FeatureSet {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<Vec> features;  // f_out^s, C_post each

  std::size_t size() const { return features.size(); }
};

/// Skeleton-branch features of every sequence. Reads only the checkpoint and
/// the sequences. Throws ConfigError for an unfrozen checkpoint and DataError
/// for a topology mismatch.
FeatureSet extract_features(const ModelCheckpoint& checkpoint, const Dataset& data, const SkeletonTopology& topology);

/// Indices into a feature set. `classes` is sorted; support[i] belongs to
/// classes[i].
struct Episode {
  std::vector<int> classes;
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;
  std::uint64_t seed = 0;

  int n_way() const { return int(classes.size()); }
};

/// One uniformly drawn support sample per class; every other sample is a
/// query. Throws DataError for a class with fewer than two samples.
Episode sample_episode(const std::vector<int>& labels, std::uint64_t seed);

/// Elementwise x^lambda, or log(x + 1e-6) when lambda == 0.
Vec tukey_transform(const Vec& v, double lambda);

/// Shift making features nonnegative: x -> max(x - min, 0), where min is the
/// smallest base-feature entry.
struct FeatureShift {
  double minimum = 0.0;
  Vec apply(const Vec& v) const { return (v.array() - minimum).cwiseMax(0.0).matrix(); }
};
FeatureShift fit_shift(const std::vector<Vec>& base_features);

struct BaseStatistics {
  std::vector<int> labels;
  std::vector<Vec> means;
  std::vector<Mat> covariances;
  std::vector<int> counts;
};

/// Per-class mean and covariance (n - 1 normalisation; zero for one sample).
/// `diagonal` keeps only variances.
BaseStatistics compute_base_statistics(const std::vector<Vec>& features, const std::vector<int>& labels,
                                       bool diagonal = false);

struct CalibratedDistribution {
  Vec mean;
  Mat covariance;
  std::vector<std::size_t> selected;  // positions into BaseStatistics, nearest first
};

/// Mean of the k nearest base means and the support feature; covariance is
/// the average of their covariances plus alpha * I.
CalibratedDistribution dc_calibrate(const Vec& support, const BaseStatistics& stats, int k, double alpha);

struct DcOptions {
  int k = 2;
  double alpha = 0.21;
  double lambda = 0.5;
  int n_samples = 200;
  int steps = 200;         // logistic-regression iterations
  double lr = 0.1;
  double momentum = 0.9;
  bool diagonal = false;

  void validate() const;
};

inline constexpr double kMinCovarianceRidge = 1e-6;

/// Multinomial logistic regression trained by full-batch gradient descent
/// with momentum, starting from zero weights.
struct LogisticModel {
  Mat weights;  // C x K
  Vec bias;     // K
  int predict(const Vec& x) const;  // ties go to the lowest class position
};
LogisticModel fit_logistic(const std::vector<Vec>& xs, const std::vector<int>& ys, int n_classes, int steps,
                           double lr, double momentum);

/// Inputs are already shifted and Tukey-transformed. Returns class labels
/// (taken from `classes`) for each query.
std::vector<int> dc_classify(const std::vector<Vec>& support, const std::vector<int>& classes,
                             const std::vector<Vec>& queries, const BaseStatistics& stats, const DcOptions& options,
                             std::uint64_t seed);

/// Nearest support by cosine similarity. When the query or any support has
/// zero norm, that query is ranked by Euclidean distance instead. Ties go to the lowest class.
std::vector<int> prototype_classify(const std::vector<Vec>& support, const std::vector<int>& classes,
                                    const std::vector<Vec>& queries);

enum class ClassifierKind { dc, prototype };
std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier(const std::string& name);

struct EvalOptions {
  ClassifierKind classifier = ClassifierKind::dc;
  int episodes = 10;
  std::uint64_t seed = 0;  // episode e uses seed + e
  DcOptions dc;
  int threads = 1;
};

struct EvalReport {
  std::string classifier;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<double> episode_accuracy;
  std::vector<std::uint64_t> seeds;
  std::vector<int> classes;
  std::map<int, double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], positions in `classes`
  nlohmann::json config;
};

/// Episodes over `novel`; the DC classifier uses statistics of `base`.
EvalReport evaluate_features(const FeatureSet& base, const FeatureSet& novel, const EvalOptions& options);
EvalReport evaluate(const ModelCheckpoint& checkpoint, const Dataset& base, const Dataset& novel,
                    const SkeletonTopology& topology, const EvalOptions& options);

nlohmann::json to_json(const EvalReport& report);
void save_report(const EvalReport& report, const std::filesystem::path& path);

/// Mean over samples of the importance mass on the sample's ground-truth
/// informative joints, next to the mean uniform level |key| / V.
struct KeyJointMass {
  double mass = 0.0;
  double uniform = 0.0;
  std::size_t samples = 0;
};
KeyJointMass key_joint_mass(const ModelCheckpoint& checkpoint, const Dataset& data, const SkeletonTopology& topology);

}  // namespace crossglg
