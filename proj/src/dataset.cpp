#include "crossglg/dataset.hpp"

#include "crossglg/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace crossglg {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

using nlohmann::json;

constexpr char kBinaryMagic[8] = {'C', 'G', 'L', 'G', 'D', 'S', '0', '1'};

std::string record_error(std::size_t index, const std::string& what) {
  return "record " + std::to_string(index) + ": " + what;
}

Mat parse_frames(const json& frames, std::size_t index, int joints) {
  if (!frames.is_array() || frames.empty()) throw DataError(record_error(index, "frames must be a non-empty array"));
  const int t_count = int(frames.size());
  Mat out(t_count * joints, 3);
  for (int t = 0; t < t_count; ++t) {
    const json& frame = frames[std::size_t(t)];
    if (!frame.is_array() || int(frame.size()) != joints) {
      throw DataError(record_error(index, "frame " + std::to_string(t) + " has " +
                                              std::to_string(frame.is_array() ? frame.size() : 0) +
                                              " joints, topology expects " + std::to_string(joints)));
    }
    for (int v = 0; v < joints; ++v) {
      const json& xyz = frame[std::size_t(v)];
      if (!xyz.is_array() || xyz.size() != 3) {
        throw DataError(record_error(index, "joint " + std::to_string(v) + " of frame " + std::to_string(t) +
                                                " is not a 3-vector"));
      }
      for (int c = 0; c < 3; ++c) {
        const json& value = xyz[std::size_t(c)];
        if (!value.is_number()) {
          throw DataError(record_error(index, "non-finite coordinate at frame " + std::to_string(t)));
        }
        const double x = value.get<double>();
        if (!std::isfinite(x)) {
          throw DataError(record_error(index, "non-finite coordinate at frame " + std::to_string(t)));
        }
        out(t * joints + v, c) = x;
      }
    }
  }
  return out;
}

void apply_header(const json& header, Dataset& ds, const SkeletonTopology& topology) {
  if (header.contains("topology")) {
    const auto name = header.at("topology").get<std::string>();
    if (name != topology.name) {
      throw DataError("dataset topology '" + name + "' does not match '" + topology.name + "'");
    }
  }
  if (header.contains("classes")) {
    for (const auto& [key, value] : header.at("classes").items()) ds.class_names[std::stoi(key)] = value.get<std::string>();
  }
  if (header.contains("key_joints")) {
    for (const auto& [key, value] : header.at("key_joints").items()) {
      auto k = value.get<std::vector<int>>();
      if (int(k.size()) != topology.joint_count()) throw DataError("key_joints vector length mismatch for class " + key);
      ds.key_joint_truth[std::stoi(key)] = std::move(k);
    }
  }
}

json header_json(const Dataset& ds) {
  json header;
  header["topology"] = ds.topology_name;
  json classes = json::object();
  for (const auto& [label, name] : ds.class_names) classes[std::to_string(label)] = name;
  header["classes"] = classes;
  if (!ds.key_joint_truth.empty()) {
    json kj = json::object();
    for (const auto& [label, k] : ds.key_joint_truth) kj[std::to_string(label)] = k;
    header["key_joints"] = kj;
  }
  return header;
}

void check_label(Dataset& ds, std::size_t index, int label, bool have_classes) {
  if (label < 0) throw DataError(record_error(index, "unknown label " + std::to_string(label)));
  if (have_classes) {
    if (ds.class_names.count(label) == 0) throw DataError(record_error(index, "unknown label " + std::to_string(label)));
  } else if (ds.class_names.count(label) == 0) {
    ds.class_names[label] = "class_" + std::to_string(label);
  }
}

}  // namespace

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(s.label);
  return out;
}

std::vector<int> Dataset::present_classes() const {
  std::set<int> seen;
  for (const auto& s : sequences) seen.insert(s.label);
  return {seen.begin(), seen.end()};
}

Dataset load_dataset(const std::filesystem::path& path, const SkeletonTopology& topology) {
  if (path.extension() == ".bin") return load_dataset_binary(path, topology);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());

  Dataset ds;
  ds.topology_name = topology.name;
  const int joints = topology.joint_count();
  bool have_classes = false;
  bool first = true;
  std::size_t index = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(record_error(index, std::string("malformed record: ") + e.what()));
    }
    if (first && rec.contains("header")) {
      first = false;
      apply_header(rec.at("header"), ds, topology);
      have_classes = !ds.class_names.empty();
      continue;
    }
    first = false;
    try {
      SkeletonSequence seq;
      seq.id = rec.at("id").get<std::string>();
      seq.label = rec.at("label").get<int>();
      seq.joints = joints;
      seq.topology_name = topology.name;
      if (rec.contains("bodies")) {
        const json& bodies = rec.at("bodies");
        if (!bodies.is_array() || bodies.empty()) throw DataError(record_error(index, "bodies must be non-empty"));
        seq.frames = parse_frames(bodies[0], index, joints);
        seq.dropped_bodies = int(bodies.size()) - 1;
      } else {
        seq.frames = parse_frames(rec.at("frames"), index, joints);
      }
      check_label(ds, index, seq.label, have_classes);
      ds.sequences.push_back(std::move(seq));
    } catch (const json::exception& e) {
      throw DataError(record_error(index, std::string("missing or invalid field: ") + e.what()));
    }
    ++index;
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << json{{"header", header_json(dataset)}}.dump() << '\n';
  for (const auto& seq : dataset.sequences) {
    json frames = json::array();
    for (int t = 0; t < seq.frame_count(); ++t) {
      json frame = json::array();
      for (int v = 0; v < seq.joints; ++v) {
        const auto p = seq.joint(t, v);
        frame.push_back({p.x(), p.y(), p.z()});
      }
      frames.push_back(std::move(frame));
    }
    out << json{{"id", seq.id}, {"label", seq.label}, {"frames", std::move(frames)}}.dump() << '\n';
  }
}

void save_dataset_binary(const Dataset& dataset, const std::filesystem::path& path) {
  json meta;
  meta["header"] = header_json(dataset);
  meta["records"] = json::array();
  for (const auto& seq : dataset.sequences) {
    meta["records"].push_back({{"id", seq.id}, {"label", seq.label}, {"frames", seq.frame_count()},
                               {"joints", seq.joints}, {"dropped_bodies", seq.dropped_bodies}});
  }
  const std::string meta_text = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kBinaryMagic, sizeof(kBinaryMagic));
  const std::uint64_t len = meta_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(meta_text.data(), std::streamsize(meta_text.size()));
  for (const auto& seq : dataset.sequences) {
    out.write(reinterpret_cast<const char*>(seq.frames.data()), std::streamsize(seq.frames.size() * sizeof(double)));
  }
}

Dataset load_dataset_binary(const std::filesystem::path& path, const SkeletonTopology& topology) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBinaryMagic, sizeof(magic)) != 0) throw DataError("not a binary dataset: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string meta_text(len, '\0');
  in.read(meta_text.data(), std::streamsize(len));
  if (!in) throw DataError("truncated binary dataset header");
  const json meta = json::parse(meta_text);

  Dataset ds;
  ds.topology_name = topology.name;
  apply_header(meta.at("header"), ds, topology);
  const bool have_classes = !ds.class_names.empty();
  std::size_t index = 0;
  for (const auto& rec : meta.at("records")) {
    SkeletonSequence seq;
    seq.id = rec.at("id").get<std::string>();
    seq.label = rec.at("label").get<int>();
    seq.joints = rec.at("joints").get<int>();
    seq.dropped_bodies = rec.value("dropped_bodies", 0);
    seq.topology_name = topology.name;
    const int frames = rec.at("frames").get<int>();
    if (seq.joints != topology.joint_count()) {
      throw DataError(record_error(index, "record has " + std::to_string(seq.joints) + " joints, topology expects " +
                                              std::to_string(topology.joint_count())));
    }
    if (frames < 1) throw DataError(record_error(index, "no frames"));
    seq.frames.resize(Eigen::Index(frames) * seq.joints, 3);
    in.read(reinterpret_cast<char*>(seq.frames.data()), std::streamsize(seq.frames.size() * sizeof(double)));
    if (!in) throw DataError(record_error(index, "truncated coordinate data"));
    if (!seq.frames.allFinite()) throw DataError(record_error(index, "non-finite coordinate"));
    check_label(ds, index, seq.label, have_classes);
    ds.sequences.push_back(std::move(seq));
    ++index;
  }
  return ds;
}

NormalizedSequence normalize_sequence(const SkeletonSequence& seq, const SkeletonTopology& topology) {
  if (seq.joints != topology.joint_count()) throw DataError("sequence " + seq.id + ": joint count does not match topology");
  NormalizedSequence out{seq, false};
  const int root = topology.find_joint("base of spine").value_or(0);
  const Eigen::RowVector3d origin = seq.frames.row(root);
  out.sequence.frames.rowwise() -= origin;

  double total = 0.0;
  for (const auto& [a, b] : topology.edges) total += (seq.frames.row(a) - seq.frames.row(b)).norm();
  const double mean_bone = topology.edges.empty() ? 0.0 : total / double(topology.edges.size());
  if (mean_bone > 0.0) {
    out.sequence.frames /= mean_bone;
  } else {
    out.degenerate = true;
  }
  return out;
}

SkeletonSequence resample_time(const SkeletonSequence& seq, int frames_out) {
  const int t_in = seq.frame_count();
  if (t_in < 1 || frames_out < 1) throw DataError("resample_time: frame counts must be positive");
  SkeletonSequence out = seq;
  out.frames.resize(Eigen::Index(frames_out) * seq.joints, 3);
  for (int i = 0; i < frames_out; ++i) {
    const int src = int((std::int64_t(i) * t_in) / frames_out);
    out.frames.middleRows(Eigen::Index(i) * seq.joints, seq.joints) =
        seq.frames.middleRows(Eigen::Index(src) * seq.joints, seq.joints);
  }
  return out;
}

Mat prepare_frames(const SkeletonSequence& seq, const SkeletonTopology& topology, int frames_out) {
  return resample_time(normalize_sequence(seq, topology).sequence, frames_out).frames;
}

std::pair<Dataset, Dataset> split_base_novel(const Dataset& dataset, const std::vector<int>& base_classes) {
  const std::set<int> base(base_classes.begin(), base_classes.end());
  const auto present = dataset.present_classes();
  for (int c : base) {
    if (dataset.class_names.count(c) == 0 && !std::binary_search(present.begin(), present.end(), c)) {
      throw DataError("base class " + std::to_string(c) + " not present in dataset");
    }
  }
  Dataset base_ds;
  Dataset novel_ds;
  for (Dataset* d : {&base_ds, &novel_ds}) {
    d->topology_name = dataset.topology_name;
  }
  for (const auto& [label, name] : dataset.class_names) {
    Dataset& d = base.count(label) ? base_ds : novel_ds;
    d.class_names[label] = name;
    if (auto it = dataset.key_joint_truth.find(label); it != dataset.key_joint_truth.end()) {
      d.key_joint_truth[label] = it->second;
    }
  }
  for (const auto& seq : dataset.sequences) {
    (base.count(seq.label) ? base_ds : novel_ds).sequences.push_back(seq);
  }
  return {std::move(base_ds), std::move(novel_ds)};
}

Dataset subset_by_labels(const Dataset& dataset, const std::vector<int>& labels) {
  return split_base_novel(dataset, labels).first;
}

ClassSplit load_class_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path.string());
  try {
    const auto j = json::parse(in);
    ClassSplit split;
    split.name = j.value("name", path.stem().string());
    split.train = j.at("train").get<std::vector<int>>();
    split.novel = j.at("novel").get<std::vector<int>>();
    return split;
  } catch (const json::exception& e) {
    throw DataError("malformed split file " + path.string() + ": " + e.what());
  }
}

std::vector<int> parse_class_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto dash = item.find('-', 1);
      if (dash == std::string::npos) {
        out.push_back(std::stoi(item));
      } else {
        const int lo = std::stoi(item.substr(0, dash));
        const int hi = std::stoi(item.substr(dash + 1));
        if (hi < lo) throw ConfigError("bad class range '" + item + "'");
        for (int c = lo; c <= hi; ++c) out.push_back(c);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad class list '" + text + "'");
    }
  }
  return out;
}

}  // namespace crossglg
