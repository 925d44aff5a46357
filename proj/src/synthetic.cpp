#include "crossglg/synthetic.hpp"

#include "crossglg/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace crossglg {

namespace {

struct JointGroup {
  const char* phrase;
  std::vector<int> joints;
};

// Phrases are chosen so that key-joint extraction on them yields exactly the
// listed joints.
const std::vector<JointGroup>& joint_groups() {
  static const std::vector<JointGroup> groups = {
      {"left arm and left hand", {4, 5, 6, 7}},
      {"right arm and right hand", {8, 9, 10, 11}},
      {"left leg", {12, 13, 14, 15}},
      {"right leg", {16, 17, 18, 19}},
      {"head and neck", {2, 3}},
      {"spine", {0, 1, 20}},
      {"tip of left hand and left thumb", {21, 22}},
      {"tip of right hand and right thumb", {23, 24}},
  };
  return groups;
}

std::vector<std::vector<int>> group_subsets() {
  const int g = int(joint_groups().size());
  std::vector<std::vector<int>> subsets;
  for (int a = 0; a < g; ++a) subsets.push_back({a});
  for (int a = 0; a < g; ++a) {
    for (int b = a + 1; b < g; ++b) subsets.push_back({a, b});
  }
  return subsets;
}

constexpr double kMaxYawRadians = 15.0 * std::numbers::pi / 180.0;

}  // namespace

std::vector<Eigen::Vector3d> ntu25_rest_pose() {
  std::vector<Eigen::Vector3d> p(25);
  p[0] = {0.0, 0.0, 0.0};
  p[1] = {0.0, 0.25, 0.0};
  p[20] = {0.0, 0.50, 0.0};
  p[2] = {0.0, 0.58, 0.0};
  p[3] = {0.0, 0.72, 0.02};
  p[4] = {0.18, 0.48, 0.0};
  p[5] = {0.22, 0.22, 0.0};
  p[6] = {0.24, -0.02, 0.0};
  p[7] = {0.25, -0.10, 0.0};
  p[21] = {0.26, -0.18, 0.0};
  p[22] = {0.22, -0.12, 0.03};
  p[12] = {0.10, -0.02, 0.0};
  p[13] = {0.11, -0.45, 0.0};
  p[14] = {0.11, -0.85, 0.0};
  p[15] = {0.11, -0.90, 0.10};
  // Right side mirrors the left across x = 0.
  const std::vector<std::pair<int, int>> mirror = {{4, 8}, {5, 9}, {6, 10}, {7, 11}, {21, 23}, {22, 24},
                                                   {12, 16}, {13, 17}, {14, 18}, {15, 19}};
  for (const auto& [l, r] : mirror) p[std::size_t(r)] = {-p[std::size_t(l)].x(), p[std::size_t(l)].y(), p[std::size_t(l)].z()};
  return p;
}

int synthetic_class_capacity() { return int(group_subsets().size()); }

std::vector<SyntheticClass> synthetic_classes(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.topology != "ntu25") throw ConfigError("synthetic generator supports the ntu25 topology only");
  auto subsets = group_subsets();
  if (spec.n_classes < 1 || spec.n_classes > int(subsets.size())) {
    throw ConfigError("n_classes " + std::to_string(spec.n_classes) + " exceeds the " +
                      std::to_string(subsets.size()) + " available joint subsets");
  }
  Rng rng(seed);
  std::shuffle(subsets.begin(), subsets.end(), rng);

  static const double kCycles[] = {1.0, 1.5, 2.0, 2.5, 3.0};
  std::uniform_int_distribution<int> pick_cycles(0, 4);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<SyntheticClass> classes;
  for (int c = 0; c < spec.n_classes; ++c) {
    SyntheticClass cls;
    cls.label = c;
    cls.name = (c < 10 ? "action_0" : "action_") + std::to_string(c);
    for (int g : subsets[std::size_t(c)]) {
      const auto& group = joint_groups()[std::size_t(g)];
      cls.phrases.emplace_back(group.phrase);
      cls.joints.insert(cls.joints.end(), group.joints.begin(), group.joints.end());
    }
    std::sort(cls.joints.begin(), cls.joints.end());
    cls.cycles = kCycles[pick_cycles(rng)];
    cls.tempo_word = cls.cycles <= 1.5 ? "slow" : (cls.cycles <= 2.0 ? "steady" : "fast");
    for (std::size_t j = 0; j < cls.joints.size(); ++j) {
      Eigen::Vector3d axis(gauss(rng), gauss(rng), gauss(rng));
      if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitX();
      cls.axes.push_back(axis.normalized());
      cls.phases.push_back(phase(rng));
      Eigen::Vector3d offset(gauss(rng), gauss(rng), gauss(rng));
      if (offset.norm() < 1e-9) offset = Eigen::Vector3d::UnitY();
      cls.offsets.push_back(offset.normalized());
    }
    classes.push_back(std::move(cls));
  }
  return classes;
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.samples_per_class < 1 || spec.frames < 1) throw ConfigError("synthetic spec needs samples and frames >= 1");
  if (spec.noise < 0.0 || spec.amplitude < 0.0 || spec.posture < 0.0 || spec.distractor < 0.0) {
    throw ConfigError("synthetic amplitude, posture, distractor and noise must be >= 0");
  }
  const auto topology = load_topology(spec.topology);
  const auto classes = synthetic_classes(spec, seed);
  const auto rest = ntu25_rest_pose();
  const int joints = topology.joint_count();

  Dataset ds;
  ds.topology_name = topology.name;
  for (const auto& cls : classes) {
    ds.class_names[cls.label] = cls.name;
    std::vector<int> k(std::size_t(joints), 0);
    for (int j : cls.joints) k[std::size_t(j)] = 1;
    ds.key_joint_truth[cls.label] = std::move(k);
  }

  // Separate stream from the class catalogue so catalogue and samples stay
  // independent of each other's draw counts.
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (const auto& cls : classes) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      const double amp = spec.amplitude * (0.8 + 0.4 * unit(rng));
      const double cycles = cls.cycles * (0.9 + 0.2 * unit(rng));
      const double phase0 = 2.0 * std::numbers::pi * unit(rng);
      const double yaw = kMaxYawRadians * (2.0 * unit(rng) - 1.0);
      const Eigen::Vector3d shift(2.0 * unit(rng) - 1.0, 0.2 * unit(rng), 2.0 + unit(rng));
      const Eigen::Matrix3d rot = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();

      // Class-independent motion on the remaining joints, fresh per sample.
      std::vector<Eigen::Vector3d> nuisance_offset(std::size_t(joints), Eigen::Vector3d::Zero());
      std::vector<Eigen::Vector3d> nuisance_axis(std::size_t(joints), Eigen::Vector3d::Zero());
      std::vector<double> nuisance_phase(std::size_t(joints), 0.0);
      if (spec.distractor > 0.0) {
        std::vector<bool> informative(std::size_t(joints), false);
        for (int j : cls.joints) informative[std::size_t(j)] = true;
        for (int v = 0; v < joints; ++v) {
          if (informative[std::size_t(v)]) continue;
          const std::size_t u = std::size_t(v);
          nuisance_offset[u] = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) / std::sqrt(3.0);
          nuisance_axis[u] = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) / std::sqrt(3.0);
          nuisance_phase[u] = 2.0 * std::numbers::pi * unit(rng);
        }
      }

      SkeletonSequence seq;
      seq.id = cls.name + "_" + std::to_string(s);
      seq.label = cls.label;
      seq.joints = joints;
      seq.topology_name = topology.name;
      seq.frames.resize(Eigen::Index(spec.frames) * joints, 3);
      for (int t = 0; t < spec.frames; ++t) {
        const double tau = double(t) / double(spec.frames);
        std::vector<Eigen::Vector3d> pose = rest;
        for (std::size_t j = 0; j < cls.joints.size(); ++j) {
          const double w = std::sin(2.0 * std::numbers::pi * cycles * tau + cls.phases[j] + phase0);
          pose[std::size_t(cls.joints[j])] += amp * (spec.posture * cls.offsets[j] + w * cls.axes[j]);
        }
        if (spec.distractor > 0.0) {
          for (std::size_t v = 0; v < pose.size(); ++v) {
            const double w = std::sin(2.0 * std::numbers::pi * cycles * tau + nuisance_phase[v]);
            pose[v] += spec.distractor * amp * (nuisance_offset[v] + w * nuisance_axis[v]);
          }
        }
        for (int v = 0; v < joints; ++v) {
          Eigen::Vector3d p = rot * pose[std::size_t(v)] + shift;
          if (spec.noise > 0.0) {
            for (int c = 0; c < 3; ++c) p[c] += spec.noise * gauss(rng);
          }
          seq.frames.row(Eigen::Index(t) * joints + v) = p.transpose();
        }
      }
      ds.sequences.push_back(std::move(seq));
    }
  }
  return ds;
}

}  // namespace crossglg
