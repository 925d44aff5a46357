#pragma once

#include "crossglg/dataset.hpp"
#include "crossglg/model.hpp"
#include "crossglg/text.hpp"
#include "crossglg/topology.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace crossglg {

/// Preprocessed base-class samples plus the per-class text artifacts, indexed
/// by class position (0..n_classes-1). `class_labels` maps positions back to
/// dataset labels.
struct TrainingSet {
  std::vector<int> class_labels;
  std::vector<Mat> frames;
  std::vector<int> targets;
  std::vector<Vec> k_gt;   // per class; empty when G2L is unused
  std::vector<Mat> text;   // per class; empty when L2G is unused

  std::size_t size() const { return frames.size(); }
};

/// Maps each label present in `dataset` to a class position in ascending
/// label order. `key_joints` and `text` are keyed by dataset label; a label
/// without an entry throws DataError when the config needs it.
TrainingSet make_training_set(const Dataset& dataset, const SkeletonTopology& topology, const ModelConfig& config,
                              const std::map<int, KeyJointDistribution>& key_joints,
                              const std::map<int, JointTextEmbeddings>& text);

struct StepLog {
  int epoch = 0;
  std::uint64_t step = 0;
  double lr = 0.0;
  LossBreakdown losses;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown losses;  // mean over the epoch's batches
};

struct TrainingMetadata {
  int epoch = 0;            // completed epochs
  std::uint64_t step = 0;   // completed optimizer steps
  bool frozen = false;
  std::vector<EpochLog> epochs;
  std::vector<StepLog> steps;
};

/// Momentum buffer (SGD) or first and second moments (Adam).
struct OptimizerState {
  ParamSet first;
  ParamSet second;  // empty for SGD
};

OptimizerState make_optimizer_state(const ModelConfig& config, const ParamSet& params);

struct ModelCheckpoint {
  ModelConfig config;
  std::vector<int> class_labels;
  ParamSet params;
  OptimizerState optimizer;
  TrainingMetadata meta;
};

/// Seeded initial checkpoint (not frozen unless config.epochs == 0).
ModelCheckpoint initialize_checkpoint(const ModelConfig& config, const std::vector<int>& class_labels);

struct TrainOptions {
  // Stop after this many completed epochs (negative: run to config.epochs).
  int stop_after_epoch = -1;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Learning rate after `step` of `total` steps: cosine decay to zero.
double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total);

/// One optimizer step on a mini-batch given by sample positions into `set`.
/// `step` counts previously completed steps (Adam bias correction).
LossBreakdown train_step(const CrossGlgModel& model, ParamSet& params, OptimizerState& state, const TrainingSet& set,
                         const std::vector<std::size_t>& batch, double lr, std::uint64_t step);

/// Continues training until config.epochs (or options.stop_after_epoch).
/// Reaching config.epochs marks the checkpoint frozen. Throws ConfigError on
/// a frozen checkpoint.
void continue_training(ModelCheckpoint& checkpoint, const TrainingSet& set, const TrainOptions& options = {});

ModelCheckpoint train(const ModelConfig& config, const TrainingSet& set, const TrainOptions& options = {});

/// Model with the checkpoint's parameters.
CrossGlgModel model_from_checkpoint(const ModelCheckpoint& checkpoint);

/// Directory with manifest.json and params.bin (little-endian float32).
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& dir);
ModelCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// CSV: epoch,L_s,L_c,L_calibrate,L_overall
void write_loss_log(const std::vector<EpochLog>& epochs, const std::filesystem::path& path);

struct TensorGradientCheck {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  bool exact_zero = false;
};

struct GradientCheckReport {
  std::vector<TensorGradientCheck> tensors;
  double max_rel_error = 0.0;
  double seconds = 0.0;
};

/// Compares analytic gradients of the mean overall loss on a random batch of
/// config.batch samples with central differences. Relative error is
/// |a - n| / max(|a|, |n|, 1e-6).
GradientCheckReport check_gradients(const ModelConfig& config, std::uint64_t seed, double step = 1e-5);
nlohmann::json to_json(const GradientCheckReport& report);

}  // namespace crossglg
