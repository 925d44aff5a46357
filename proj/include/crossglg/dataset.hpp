#pragma once

#include "crossglg/tensor.hpp"
#include "crossglg/topology.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace crossglg {

struct SkeletonSequence {
  std::string id;
  int label = 0;
  int joints = 0;
  Mat frames;  // (T * V) x 3, row t * V + v
  std::string topology_name;
  // Number of additional bodies present in the source record and dropped.
  int dropped_bodies = 0;

  int frame_count() const { return joints == 0 ? 0 : int(frames.rows()) / joints; }
  Eigen::Vector3d joint(int t, int v) const { return frames.row(t * joints + v).transpose(); }
};

struct Dataset {
  std::string topology_name;
  std::vector<SkeletonSequence> sequences;
  std::map<int, std::string> class_names;
  // Binary V-vectors, synthetic data only.
  std::map<int, std::vector<int>> key_joint_truth;

  std::size_t size() const { return sequences.size(); }
  std::vector<int> labels() const;
  // Sorted distinct labels present in the sequences.
  std::vector<int> present_classes() const;
};

/// Loads the line-delimited JSON dataset format, or the binary companion
/// format when the file ends in ".bin". Every record is validated against the
/// topology; errors name the offending record index.
Dataset load_dataset(const std::filesystem::path& path, const SkeletonTopology& topology);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
void save_dataset_binary(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset_binary(const std::filesystem::path& path, const SkeletonTopology& topology);

struct NormalizedSequence {
  SkeletonSequence sequence;
  bool degenerate = false;
};

/// Moves the base-of-spine joint of frame 0 to the origin and divides by the
/// mean bone length of frame 0. A skeleton whose bones all have zero length is
/// only translated and flagged as degenerate.
NormalizedSequence normalize_sequence(const SkeletonSequence& seq, const SkeletonTopology& topology);

/// Picks frames floor(i * T / frames_out) for i in [0, frames_out).
SkeletonSequence resample_time(const SkeletonSequence& seq, int frames_out);

/// Normalization followed by resampling: the model input preprocessing.
Mat prepare_frames(const SkeletonSequence& seq, const SkeletonTopology& topology, int frames_out);

std::pair<Dataset, Dataset> split_base_novel(const Dataset& dataset, const std::vector<int>& base_classes);

Dataset subset_by_labels(const Dataset& dataset, const std::vector<int>& labels);

struct ClassSplit {
  std::string name;
  std::vector<int> train;
  std::vector<int> novel;
};

/// Reads a base/novel class split list ({"name", "train": [...], "novel": [...]}).
ClassSplit load_class_split(const std::filesystem::path& path);

/// Parses "0-9", "1,3,5" or combinations such as "0-4,8".
std::vector<int> parse_class_list(const std::string& text);

}  // namespace crossglg
