#include "crossglg/topology.hpp"

#include "crossglg/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>

#ifndef CROSSGLG_DEFAULT_DATA_DIR
#define CROSSGLG_DEFAULT_DATA_DIR "data"
#endif

namespace crossglg {

namespace {

SkeletonTopology make_ntu25() {
  SkeletonTopology topo;
  topo.name = "ntu25";
  topo.joint_names = {
      "base of spine",  "mid of spine",    "neck",          "head",        "left shoulder",
      "left elbow",     "left wrist",      "left hand",     "right shoulder", "right elbow",
      "right wrist",    "right hand",      "left hip",      "left knee",   "left ankle",
      "left foot",      "right hip",       "right knee",    "right ankle", "right foot",
      "spine",          "tip of left hand", "left thumb",   "tip of right hand", "right thumb",
  };
  topo.edges = {{0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},   {6, 5},   {7, 6},
                {8, 20},  {9, 8},   {10, 9},  {11, 10}, {12, 0},  {13, 12}, {14, 13}, {15, 14},
                {16, 0},  {17, 16}, {18, 17}, {19, 18}, {21, 7},  {22, 7},  {23, 11}, {24, 11}};

  for (int j = 0; j < topo.joint_count(); ++j) topo.part_map[topo.joint_names[std::size_t(j)]] = {j};
  // "spine" names the shoulder-level spine joint, but as a body-part term it
  // covers the whole spine chain.
  topo.part_map["spine"] = {0, 1, 20};

  auto& pm = topo.part_map;
  pm["arm"] = {4, 5, 6, 8, 9, 10};
  pm["left arm"] = {4, 5, 6};
  pm["right arm"] = {8, 9, 10};
  pm["forearm"] = {5, 6, 9, 10};
  pm["leg"] = {12, 13, 14, 15, 16, 17, 18, 19};
  pm["left leg"] = {12, 13, 14, 15};
  pm["right leg"] = {16, 17, 18, 19};
  pm["hand"] = {7, 11};
  pm["foot"] = {15, 19};
  pm["toe"] = {15, 19};
  pm["shoulder"] = {4, 8};
  pm["elbow"] = {5, 9};
  pm["wrist"] = {6, 10};
  pm["hip"] = {12, 16};
  pm["knee"] = {13, 17};
  pm["ankle"] = {14, 18};
  pm["thumb"] = {22, 24};
  pm["finger"] = {21, 22, 23, 24};
  pm["fingertip"] = {21, 23};
  pm["eye"] = {3};
  pm["face"] = {3};
  pm["mouth"] = {3};
  pm["nose"] = {3};
  pm["ear"] = {3};
  return topo;
}

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return out;
}

std::filesystem::path data_root() {
  if (const char* env = std::getenv("CROSSGLG_DATA_DIR"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env);
  }
  return std::filesystem::path(CROSSGLG_DEFAULT_DATA_DIR);
}

std::optional<int> SkeletonTopology::find_joint(std::string_view joint_name) const {
  const std::string key = to_lower(joint_name);
  for (std::size_t i = 0; i < joint_names.size(); ++i) {
    if (to_lower(joint_names[i]) == key) return int(i);
  }
  return std::nullopt;
}

int SkeletonTopology::joint_index(std::string_view joint_name) const {
  if (auto j = find_joint(joint_name)) return *j;
  throw DataError("topology " + name + ": unknown joint '" + std::string(joint_name) + "'");
}

void SkeletonTopology::validate() const {
  const int v = joint_count();
  if (v == 0) throw DataError("topology " + name + ": no joints");
  std::set<std::string> seen;
  for (const auto& j : joint_names) {
    if (!seen.insert(to_lower(j)).second) throw DataError("topology " + name + ": duplicate joint '" + j + "'");
  }
  auto check_index = [&](int j, const std::string& where) {
    if (j < 0 || j >= v) {
      throw DataError("topology " + name + ": joint index " + std::to_string(j) + " out of range in " + where);
    }
  };
  for (const auto& [a, b] : edges) {
    check_index(a, "edges");
    check_index(b, "edges");
  }
  for (const auto& [term, joints] : part_map) {
    if (joints.empty()) throw DataError("topology " + name + ": part '" + term + "' maps to no joints");
    for (int j : joints) check_index(j, "part '" + term + "'");
  }
  for (int j = 0; j < v; ++j) {
    auto it = part_map.find(to_lower(joint_names[std::size_t(j)]));
    if (it == part_map.end() || std::find(it->second.begin(), it->second.end(), j) == it->second.end()) {
      throw DataError("topology " + name + ": part_map does not cover joint '" + joint_names[std::size_t(j)] + "'");
    }
  }
}

nlohmann::json topology_to_json(const SkeletonTopology& topology) {
  nlohmann::json j;
  j["name"] = topology.name;
  j["joint_names"] = topology.joint_names;
  j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : topology.edges) j["edges"].push_back({a, b});
  j["part_map"] = topology.part_map;
  return j;
}

SkeletonTopology topology_from_json(const nlohmann::json& j) {
  SkeletonTopology topo;
  try {
    topo.name = j.at("name").get<std::string>();
    topo.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("edges")) topo.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    for (const auto& [term, joints] : j.at("part_map").items()) {
      topo.part_map[to_lower(term)] = joints.get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed topology: ") + e.what());
  }
  topo.validate();
  return topo;
}

SkeletonTopology load_topology(std::string_view name) {
  if (name == "ntu25") {
    SkeletonTopology topo = make_ntu25();
    topo.validate();
    return topo;
  }
  const auto path = data_root() / "topologies" / (std::string(name) + ".json");
  if (!std::filesystem::exists(path)) throw DataError("unknown topology '" + std::string(name) + "'");
  return load_topology_file(path);
}

SkeletonTopology load_topology_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open topology file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed topology file " + path.string() + ": " + e.what());
  }
  return topology_from_json(j);
}

void save_topology_file(const SkeletonTopology& topology, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << topology_to_json(topology).dump(2) << '\n';
}

}  // namespace crossglg
