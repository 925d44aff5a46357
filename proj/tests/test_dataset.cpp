#include "crossglg/dataset.hpp"
#include "crossglg/errors.hpp"
#include "crossglg/synthetic.hpp"
#include "test_common.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace crossglg;

namespace {

SkeletonSequence ramp_sequence(int frames, int joints) {
  SkeletonSequence s;
  s.id = "ramp";
  s.joints = joints;
  s.frames.resize(Eigen::Index(frames) * joints, 3);
  for (int t = 0; t < frames; ++t) {
    for (int v = 0; v < joints; ++v) s.frames.row(t * joints + v) << t, v, t * 100 + v;
  }
  return s;
}

std::string record_line(const std::string& id, int label, int frames, int joints) {
  nlohmann::json f = nlohmann::json::array();
  for (int t = 0; t < frames; ++t) {
    nlohmann::json frame = nlohmann::json::array();
    for (int v = 0; v < joints; ++v) frame.push_back({0.1 * v, 0.2 * t, 1.0});
    f.push_back(frame);
  }
  return nlohmann::json{{"id", id}, {"label", label}, {"frames", f}}.dump();
}

}  // namespace

TEST(DatasetIo, ThreeRecords) {
  test::TempDir dir("ds");
  {
    std::ofstream out(dir.path() / "d.jsonl");
    for (int i = 0; i < 3; ++i) out << record_line("s" + std::to_string(i), i, 4, 25) << "\n";
  }
  const auto ds = load_dataset(dir.path() / "d.jsonl", load_topology("ntu25"));
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.sequences[2].frame_count(), 4);
}

TEST(DatasetIo, WrongJointCountNamesRecord) {
  test::TempDir dir("ds");
  {
    std::ofstream out(dir.path() / "d.jsonl");
    out << record_line("ok", 0, 2, 25) << "\n" << record_line("bad", 0, 2, 24) << "\n";
  }
  try {
    load_dataset(dir.path() / "d.jsonl", load_topology("ntu25"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, EmptyFileIsEmptyDataset) {
  test::TempDir dir("ds");
  std::ofstream(dir.path() / "d.jsonl").close();
  EXPECT_EQ(load_dataset(dir.path() / "d.jsonl", load_topology("ntu25")).size(), 0u);
}

TEST(DatasetIo, TextAndBinaryRoundTrip) {
  test::TempDir dir("ds");
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.samples_per_class = 2;
  spec.frames = 5;
  const auto ds = generate_synthetic(spec, 4);
  const auto topo = load_topology("ntu25");
  save_dataset(ds, dir.path() / "d.jsonl");
  save_dataset_binary(ds, dir.path() / "d.bin");
  const auto a = load_dataset(dir.path() / "d.jsonl", topo);
  const auto b = load_dataset(dir.path() / "d.bin", topo);
  ASSERT_EQ(a.size(), ds.size());
  ASSERT_EQ(b.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(a.sequences[i].frames, ds.sequences[i].frames);
    EXPECT_EQ(b.sequences[i].frames, ds.sequences[i].frames);
    EXPECT_EQ(a.sequences[i].id, ds.sequences[i].id);
    EXPECT_EQ(b.sequences[i].label, ds.sequences[i].label);
  }
  EXPECT_EQ(a.class_names, ds.class_names);
  EXPECT_EQ(b.key_joint_truth, ds.key_joint_truth);
}

TEST(Resample, Identity) {
  const auto s = ramp_sequence(60, 2);
  EXPECT_EQ(resample_time(s, 60).frames, s.frames);
}

TEST(Resample, HalvesToEvenFrames) {
  const auto s = ramp_sequence(120, 2);
  const auto r = resample_time(s, 60);
  ASSERT_EQ(r.frame_count(), 60);
  for (int i = 0; i < 60; ++i) EXPECT_EQ(r.joint(i, 0).x(), 2.0 * i);
}

TEST(Resample, SingleFrameRepeats) {
  const auto s = ramp_sequence(1, 2);
  const auto r = resample_time(s, 60);
  for (int i = 0; i < 60; ++i) EXPECT_EQ(r.joint(i, 1), s.joint(0, 1));
}

TEST(Normalize, CenteredUnitSkeletonUnchanged) {
  const auto topo = load_topology("ntu25");
  // Base of spine at the origin; every bone of length one along x.
  SkeletonSequence s;
  s.joints = 25;
  s.frames = Mat::Zero(25, 3);
  std::vector<int> depth(25, -1);
  depth[0] = 0;
  for (int pass = 0; pass < 25; ++pass) {
    for (auto [a, b] : topo.edges) {
      if (depth[std::size_t(a)] >= 0 && depth[std::size_t(b)] < 0) depth[std::size_t(b)] = depth[std::size_t(a)] + 1;
      if (depth[std::size_t(b)] >= 0 && depth[std::size_t(a)] < 0) depth[std::size_t(a)] = depth[std::size_t(b)] + 1;
    }
  }
  for (int v = 0; v < 25; ++v) s.frames(v, 0) = depth[std::size_t(v)];
  const auto n = normalize_sequence(s, topo);
  EXPECT_FALSE(n.degenerate);
  EXPECT_LE((n.sequence.frames - s.frames).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalize, TranslationInvariant) {
  const auto topo = load_topology("ntu25");
  SyntheticSpec spec;
  spec.n_classes = 1;
  spec.samples_per_class = 1;
  const auto s = generate_synthetic(spec, 1).sequences[0];
  auto moved = s;
  for (Eigen::Index r = 0; r < moved.frames.rows(); ++r) moved.frames.row(r) += Eigen::RowVector3d(1, 2, 3);
  const auto a = normalize_sequence(s, topo).sequence.frames;
  const auto b = normalize_sequence(moved, topo).sequence.frames;
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Normalize, CoincidentJointsFlagged) {
  const auto topo = load_topology("ntu25");
  SkeletonSequence s;
  s.joints = 25;
  s.frames = Mat::Constant(50, 3, 2.5);
  const auto n = normalize_sequence(s, topo);
  EXPECT_TRUE(n.degenerate);
  EXPECT_LE(n.sequence.frames.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Split, KineticsTwentyClassList) {
  const auto split = load_class_split(data_root() / "splits" / "kinetics_20.json");
  ASSERT_EQ(split.train.size(), 20u);
  EXPECT_EQ(split.train.front(), 2);
  EXPECT_EQ(split.train.back(), 382);
  EXPECT_EQ(split.novel.front(), 3);
  const auto forty = load_class_split(data_root() / "splits" / "kinetics_40.json");
  EXPECT_EQ(forty.train.size(), 40u);
  EXPECT_EQ(forty.novel, split.novel);

  Dataset ds;
  for (int label = 0; label < 400; ++label) {
    SkeletonSequence s;
    s.id = std::to_string(label);
    s.label = label;
    ds.sequences.push_back(s);
  }
  const auto [base, novel] = split_base_novel(ds, split.train);
  EXPECT_EQ(base.present_classes(), split.train);
}

TEST(Split, AllBaseLeavesNoNovel) {
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.samples_per_class = 2;
  spec.frames = 2;
  const auto ds = generate_synthetic(spec, 0);
  const auto [base, novel] = split_base_novel(ds, {0, 1, 2});
  EXPECT_EQ(base.size(), ds.size());
  EXPECT_EQ(novel.size(), 0u);
}

TEST(Split, PartitionPropertyRandomized) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> n_seq(0, 60), n_lab(1, 12);
    const int labels = n_lab(rng);
    std::uniform_int_distribution<int> lab(0, labels - 1);
    Dataset ds;
    for (int i = n_seq(rng); i > 0; --i) {
      SkeletonSequence s;
      s.id = std::to_string(i);
      s.label = lab(rng);
      ds.sequences.push_back(s);
    }
    std::vector<int> base_classes;
    std::bernoulli_distribution coin(0.5);
    for (int l : ds.present_classes()) {
      if (coin(rng)) base_classes.push_back(l);
    }
    const auto [base, novel] = split_base_novel(ds, base_classes);
    ASSERT_EQ(base.size() + novel.size(), ds.size());
    const std::set<int> bs(base_classes.begin(), base_classes.end());
    for (const auto& s : base.sequences) EXPECT_TRUE(bs.count(s.label));
    for (const auto& s : novel.sequences) EXPECT_FALSE(bs.count(s.label));
  }
}

TEST(Split, UnknownBaseClassRejected) {
  Dataset ds;
  SkeletonSequence s;
  s.label = 0;
  ds.sequences.push_back(s);
  EXPECT_THROW(split_base_novel(ds, {5}), DataError);
}

TEST(ClassList, Ranges) {
  EXPECT_EQ(parse_class_list("0-4,8"), (std::vector<int>{0, 1, 2, 3, 4, 8}));
  EXPECT_EQ(parse_class_list("1,3,5"), (std::vector<int>{1, 3, 5}));
}

TEST(Synthetic, SameSeedIdentical) {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.noise = 0.0;
  const auto a = generate_synthetic(spec, 7);
  const auto b = generate_synthetic(spec, 7);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.sequences[i].frames, b.sequences[i].frames);
}

TEST(Synthetic, Counts) {
  SyntheticSpec spec;
  spec.n_classes = 10;
  spec.samples_per_class = 20;
  const auto ds = generate_synthetic(spec, 0);
  EXPECT_EQ(ds.size(), 200u);
  EXPECT_EQ(ds.key_joint_truth.size(), 10u);
}

TEST(Synthetic, StaticOutsideInformativeJoints) {
  SyntheticSpec spec;
  spec.n_classes = 4;
  spec.samples_per_class = 2;
  spec.noise = 0.0;
  spec.distractor = 0.0;
  const auto ds = generate_synthetic(spec, 2);
  for (const auto& s : ds.sequences) {
    const auto& key = ds.key_joint_truth.at(s.label);
    for (int v = 0; v < s.joints; ++v) {
      if (key[std::size_t(v)]) continue;
      for (int t = 1; t < s.frame_count(); ++t) {
        EXPECT_LE((s.joint(t, v) - s.joint(0, v)).norm(), 1e-12);
      }
    }
  }
}

TEST(Synthetic, InvalidSpecRejected) {
  SyntheticSpec spec;
  spec.n_classes = synthetic_class_capacity() + 1;
  EXPECT_THROW(generate_synthetic(spec, 0), ConfigError);
  spec = SyntheticSpec{};
  spec.noise = -1.0;
  EXPECT_THROW(generate_synthetic(spec, 0), ConfigError);
}
