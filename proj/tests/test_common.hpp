#pragma once

#include "crossglg/dataset.hpp"
#include "crossglg/model.hpp"
#include "crossglg/synthetic.hpp"
#include "crossglg/text.hpp"
#include "crossglg/topology.hpp"
#include "crossglg/training.hpp"

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include <unistd.h>

namespace crossglg::test {

inline Mat random_mat(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline Vec random_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("crossglg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Synthetic data plus key joints and hashed text for every class.
struct SyntheticBundle {
  SkeletonTopology topology;
  Dataset data;
  std::map<int, KeyJointDistribution> keys;
  std::map<int, JointTextEmbeddings> text;
};

inline SyntheticBundle make_bundle(const SyntheticSpec& spec, std::uint64_t seed, int text_dim) {
  SyntheticBundle b;
  b.topology = load_topology(spec.topology);
  b.data = generate_synthetic(spec, seed);
  const auto descs = synthetic_descriptions(synthetic_classes(spec, seed), b.topology);
  HashedBowEmbedder embedder(text_dim);
  for (std::size_t i = 0; i < descs.size(); ++i) {
    b.keys[int(i)] = extract_key_joints(descs[i], b.topology);
    b.text[int(i)] = embed_joint_texts(descs[i], embedder, b.topology);
  }
  return b;
}

// Small model over ntu25 for fast training tests.
inline ModelConfig small_config(int n_classes) {
  ModelConfig c = desk_config();
  c.n_classes = n_classes;
  c.encoder.blocks = 2;
  c.encoder.pre_blocks = 1;
  c.encoder.embed_dim = c.encoder.pre_dim = c.encoder.post_dim = 8;
  c.encoder.jid_hidden = 8;
  c.encoder.ffn_hidden = 16;
  c.encoder.frames = 6;
  c.interaction.blocks = 1;
  c.interaction.shared_dim = 8;
  c.interaction.post_dim = 8;
  c.interaction.text_dim = 16;
  c.interaction.mlp_hidden = 16;
  c.classifier_hidden = 16;
  c.head_hidden = 16;
  c.alpha1 = 0.5;
  c.batch = 8;
  c.epochs = 2;
  return c;
}

}  // namespace crossglg::test
