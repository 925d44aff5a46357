#pragma once

#include "crossglg/dataset.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace crossglg {

/// Parameters of the synthetic skeleton generator.
///
/// Each class owns a distinct set of informative joints (one or two body-part
/// groups of the ntu25 layout) that follow a class-specific periodic
/// trajectory: a held displacement from the rest pose plus an oscillation.
/// All other joints carry per-sample random motion of relative size
/// `distractor` that says nothing about the class. Every joint receives
/// i.i.d. Gaussian noise of standard deviation `noise`, and each sample is
/// rigidly translated by a random constant offset.
struct SyntheticSpec {
  int n_classes = 14;
  int samples_per_class = 20;
  int frames = 40;
  double amplitude = 0.12;  // meters
  double noise = 0.01;      // meters
  double posture = 1.0;     // held displacement, as a multiple of amplitude
  double distractor = 0.5;  // uninformative-joint motion, as a multiple of amplitude
  std::string topology = "ntu25";
};

struct SyntheticClass {
  int label = 0;
  std::string name;
  // Body-part phrases of the informative groups, e.g. "left leg".
  std::vector<std::string> phrases;
  std::vector<int> joints;  // sorted informative joint indices
  double cycles = 1.0;      // periods per sequence
  std::vector<Eigen::Vector3d> axes;  // one per informative joint
  std::vector<double> phases;         // one per informative joint
  std::vector<Eigen::Vector3d> offsets;  // unit directions of the held displacement
  std::string tempo_word;             // "slow" | "steady" | "fast"
};

/// Number of distinct informative-joint subsets the generator can assign.
int synthetic_class_capacity();

/// Class catalogue for (spec, seed); a pure function of its arguments.
std::vector<SyntheticClass> synthetic_classes(const SyntheticSpec& spec, std::uint64_t seed);

/// Generates the dataset, with key_joint_truth filled from the informative joints.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Rest pose of the ntu25 skeleton in meters.
std::vector<Eigen::Vector3d> ntu25_rest_pose();

}  // namespace crossglg
