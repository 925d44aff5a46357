#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace crossglg {

/// Joint layout of a skeleton dataset.
///
/// `part_map` is the lexicon used for key-joint extraction: every body-part
/// term (lowercase, possibly multi-word) maps to the joints it covers. Every
/// joint name is itself a term whose joint list contains that joint.
struct SkeletonTopology {
  std::string name;
  std::vector<std::string> joint_names;
  std::map<std::string, std::vector<int>> part_map;
  std::vector<std::pair<int, int>> edges;

  int joint_count() const { return int(joint_names.size()); }

  // Case-insensitive lookup.
  std::optional<int> find_joint(std::string_view joint_name) const;
  int joint_index(std::string_view joint_name) const;

  void validate() const;
};

/// Returns a registered topology. "ntu25" is built in; other names are looked
/// up as `<data root>/topologies/<name>.json`.
SkeletonTopology load_topology(std::string_view name);

SkeletonTopology load_topology_file(const std::filesystem::path& path);
void save_topology_file(const SkeletonTopology& topology, const std::filesystem::path& path);

nlohmann::json topology_to_json(const SkeletonTopology& topology);
SkeletonTopology topology_from_json(const nlohmann::json& j);

// Lowercase ASCII copy.
std::string to_lower(std::string_view s);

/// Directory holding shipped data files. CROSSGLG_DATA_DIR overrides the
/// compiled-in default.
std::filesystem::path data_root();

}  // namespace crossglg
