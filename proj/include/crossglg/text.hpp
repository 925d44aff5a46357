#pragma once

#include "crossglg/synthetic.hpp"
#include "crossglg/tensor.hpp"
#include "crossglg/topology.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace crossglg {

/// Global description plus one motion description per joint, with
/// `joint_texts[j]` describing topology joint j.
struct ActionDescription {
  std::string action_name;
  std::string global_text;
  std::vector<std::string> joint_texts;
};

struct KeyJointDistribution {
  std::vector<int> key;  // K, binary
  Vec target;            // k_gt = K / sum(K)
};

struct JointTextEmbeddings {
  Mat rows;  // V x C_txt
  std::string embedder_id;
};

struct PromptPair {
  std::string global_prompt;
  std::string joint_prompt;
};

inline constexpr std::string_view kGlobalPromptTemplate =
    "You are a human motion expert. In one sentence, describe how a person performs the action "
    "\"[action name]\", naming the body parts and joints that move the most.";
inline constexpr std::string_view kJointPromptTemplate =
    "You are a human motion expert. For the action \"[action name]\", describe in one short sentence "
    "the motion of each of the following joints: [joint-list]. Answer with one line per joint in the "
    "form \"<joint>: <description>\".";

PromptPair render_prompts(std::string_view action_name, const SkeletonTopology& topology);

/// Reads one JSON record per line: {"action", "global", "joints": {name: text}}.
/// Joint names are matched case-insensitively; every joint must appear exactly
/// once with non-empty text.
std::vector<ActionDescription> ingest_descriptions(const std::filesystem::path& path,
                                                   const SkeletonTopology& topology);
ActionDescription description_from_json(const std::string& line, const SkeletonTopology& topology);
void save_descriptions(const std::vector<ActionDescription>& descriptions, const SkeletonTopology& topology,
                       const std::filesystem::path& path);

/// Lexicon matching of body-part terms in the global description.
///
/// The lowercased text is split into letter-only tokens. At each position the
/// longest part_map term that matches is consumed (plural forms accepted), and
/// the joints it maps to are marked. Throws TextError when nothing matches.
KeyJointDistribution extract_key_joints(const ActionDescription& desc, const SkeletonTopology& topology);
KeyJointDistribution extract_key_joints(std::string_view global_text, const SkeletonTopology& topology);

struct KeyJointRecord {
  std::string action;
  KeyJointDistribution distribution;
};
void save_key_joints(const std::vector<KeyJointRecord>& records, const std::filesystem::path& path);
std::vector<KeyJointRecord> load_key_joints(const std::filesystem::path& path, int joints);

/// Lowercase letter-only tokens.
std::vector<std::string> tokenize_words(std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view s);

/// Bag of hashed words: each token adds 1 to bucket fnv1a64(token) % dim, and
/// the count vector is L2-normalized (a zero vector stays zero).
Vec default_text_embedder(std::string_view text, int dim);

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual Vec embed(std::string_view text) const = 0;
  virtual int dim() const = 0;
  virtual std::string id() const = 0;
};

class HashedBowEmbedder final : public TextEmbedder {
 public:
  explicit HashedBowEmbedder(int dim);
  Vec embed(std::string_view text) const override { return default_text_embedder(text, dim_); }
  int dim() const override { return dim_; }
  std::string id() const override { return "hashed-bow-" + std::to_string(dim_); }

 private:
  int dim_;
};

/// Registered embedders: "hashed-bow".
std::unique_ptr<TextEmbedder> make_embedder(std::string_view name, int dim);

JointTextEmbeddings embed_joint_texts(const ActionDescription& desc, const TextEmbedder& embedder,
                                      const SkeletonTopology& topology);

/// Embedding file: JSON manifest plus a blob of row-major little-endian
/// float32 values (V x C_txt per action, at the manifest's offsets).
void save_external_embeddings(const std::map<std::string, JointTextEmbeddings>& embeddings,
                              const SkeletonTopology& topology, const std::filesystem::path& manifest_path);
std::map<std::string, JointTextEmbeddings> load_external_embeddings(const std::filesystem::path& manifest_path,
                                                                    const SkeletonTopology& topology);

/// Descriptions matching the synthetic generator's classes.
std::vector<ActionDescription> synthetic_descriptions(const std::vector<SyntheticClass>& classes,
                                                      const SkeletonTopology& topology);

}  // namespace crossglg
