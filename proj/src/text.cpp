#include "crossglg/text.hpp"

#include "crossglg/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace crossglg {

namespace {

using nlohmann::json;

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

// Token equals the lexicon word, or a plural of it.
bool word_matches(const std::string& token, const std::string& word) {
  if (token == word) return true;
  if (token.size() == word.size() + 1 && token.back() == 's' && token.compare(0, word.size(), word) == 0) return true;
  if (token.size() == word.size() + 2 && token.compare(token.size() - 2, 2, "es") == 0 &&
      token.compare(0, word.size(), word) == 0) {
    return true;
  }
  if (token == "feet" && word == "foot") return true;
  return false;
}

struct Term {
  std::vector<std::string> words;
  const std::vector<int>* joints;
};

std::vector<Term> lexicon_terms(const SkeletonTopology& topology) {
  std::vector<Term> terms;
  for (const auto& [term, joints] : topology.part_map) terms.push_back({tokenize_words(term), &joints});
  // Longest first; ties keep part_map (alphabetical) order.
  std::stable_sort(terms.begin(), terms.end(),
                   [](const Term& a, const Term& b) { return a.words.size() > b.words.size(); });
  return terms;
}

std::string axis_phrase(const Eigen::Vector3d& axis) {
  int dominant = 0;
  axis.cwiseAbs().maxCoeff(&dominant);
  switch (dominant) {
    case 0:
      return "side to side";
    case 1:
      return "up and down";
    default:
      return "forward and backward";
  }
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = char(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

PromptPair render_prompts(std::string_view action_name, const SkeletonTopology& topology) {
  if (is_blank(action_name)) throw TextError("render_prompts: empty action name");
  std::string joint_list;
  for (std::size_t i = 0; i < topology.joint_names.size(); ++i) {
    if (i > 0) joint_list += ", ";
    joint_list += topology.joint_names[i];
  }
  PromptPair out;
  out.global_prompt = replace_all(std::string(kGlobalPromptTemplate), "[action name]", action_name);
  out.joint_prompt = replace_all(std::string(kJointPromptTemplate), "[action name]", action_name);
  out.joint_prompt = replace_all(out.joint_prompt, "[joint-list]", joint_list);
  return out;
}

ActionDescription description_from_json(const std::string& line, const SkeletonTopology& topology) {
  std::vector<std::string> joint_keys;
  std::string outer_key;
  json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key) {
      if (depth == 1) outer_key = parsed.get<std::string>();
      if (depth == 2 && outer_key == "joints") joint_keys.push_back(parsed.get<std::string>());
    }
    return true;
  };
  json rec;
  try {
    rec = json::parse(line, cb);
  } catch (const json::exception& e) {
    throw TextError(std::string("malformed description record: ") + e.what());
  }

  ActionDescription desc;
  try {
    desc.action_name = rec.at("action").get<std::string>();
    desc.global_text = rec.at("global").get<std::string>();
  } catch (const json::exception& e) {
    throw TextError(std::string("description record missing field: ") + e.what());
  }
  if (is_blank(desc.action_name)) throw TextError("description with empty action name");
  if (is_blank(desc.global_text)) throw TextError("action '" + desc.action_name + "': empty global description");

  const int v = topology.joint_count();
  std::vector<int> seen(std::size_t(v), 0);
  for (const auto& key : joint_keys) {
    const auto j = topology.find_joint(key);
    if (!j) throw TextError("action '" + desc.action_name + "': unknown joint name '" + key + "'");
    if (seen[std::size_t(*j)]++ > 0) {
      throw TextError("action '" + desc.action_name + "': duplicate joint entry '" + key + "'");
    }
  }
  desc.joint_texts.assign(std::size_t(v), std::string());
  if (!rec.contains("joints") || !rec["joints"].is_object()) {
    throw TextError("action '" + desc.action_name + "': missing joints object");
  }
  for (const auto& [key, value] : rec["joints"].items()) {
    if (!value.is_string()) throw TextError("action '" + desc.action_name + "': joint '" + key + "' text is not a string");
    const int j = *topology.find_joint(key);
    desc.joint_texts[std::size_t(j)] = value.get<std::string>();
  }
  for (int j = 0; j < v; ++j) {
    if (seen[std::size_t(j)] == 0) {
      throw TextError("action '" + desc.action_name + "': missing joint entry '" + topology.joint_names[std::size_t(j)] + "'");
    }
    if (is_blank(desc.joint_texts[std::size_t(j)])) {
      throw TextError("action '" + desc.action_name + "': empty text for joint '" + topology.joint_names[std::size_t(j)] + "'");
    }
  }
  return desc;
}

std::vector<ActionDescription> ingest_descriptions(const std::filesystem::path& path,
                                                   const SkeletonTopology& topology) {
  std::ifstream in(path);
  if (!in) throw TextError("cannot open description file " + path.string());
  std::vector<ActionDescription> out;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (is_blank(line)) continue;
    try {
      out.push_back(description_from_json(line, topology));
    } catch (const TextError& e) {
      throw TextError("description " + std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
  return out;
}

void save_descriptions(const std::vector<ActionDescription>& descriptions, const SkeletonTopology& topology,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TextError("cannot write " + path.string());
  for (const auto& d : descriptions) {
    // ordered_json keeps the topology joint order in the file.
    nlohmann::ordered_json joints = nlohmann::ordered_json::object();
    for (int j = 0; j < topology.joint_count(); ++j) {
      joints[capitalize(topology.joint_names[std::size_t(j)])] = d.joint_texts.at(std::size_t(j));
    }
    nlohmann::ordered_json rec;
    rec["action"] = d.action_name;
    rec["global"] = d.global_text;
    rec["joints"] = std::move(joints);
    out << rec.dump() << '\n';
  }
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalpha(c) != 0) {
      current.push_back(char(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

KeyJointDistribution extract_key_joints(std::string_view global_text, const SkeletonTopology& topology) {
  const auto tokens = tokenize_words(global_text);
  const auto terms = lexicon_terms(topology);
  KeyJointDistribution out;
  out.key.assign(std::size_t(topology.joint_count()), 0);

  std::size_t i = 0;
  while (i < tokens.size()) {
    const Term* hit = nullptr;
    for (const auto& term : terms) {
      if (term.words.empty() || i + term.words.size() > tokens.size()) continue;
      bool ok = true;
      for (std::size_t w = 0; w < term.words.size() && ok; ++w) ok = word_matches(tokens[i + w], term.words[w]);
      if (ok) {
        hit = &term;
        break;
      }
    }
    if (hit == nullptr) {
      ++i;
      continue;
    }
    for (int j : *hit->joints) out.key[std::size_t(j)] = 1;
    i += hit->words.size();
  }

  const int total = std::accumulate(out.key.begin(), out.key.end(), 0);
  if (total == 0) throw TextError("no key joints found");
  out.target = Vec::Zero(topology.joint_count());
  for (std::size_t j = 0; j < out.key.size(); ++j) {
    if (out.key[j] != 0) out.target[Eigen::Index(j)] = 1.0 / double(total);
  }
  return out;
}

KeyJointDistribution extract_key_joints(const ActionDescription& desc, const SkeletonTopology& topology) {
  try {
    return extract_key_joints(desc.global_text, topology);
  } catch (const TextError& e) {
    throw TextError("action '" + desc.action_name + "': " + e.what());
  }
}

void save_key_joints(const std::vector<KeyJointRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TextError("cannot write " + path.string());
  for (const auto& r : records) {
    std::vector<double> target(r.distribution.target.data(),
                               r.distribution.target.data() + r.distribution.target.size());
    nlohmann::ordered_json rec;
    rec["action"] = r.action;
    rec["K"] = r.distribution.key;
    rec["k_gt"] = target;
    out << rec.dump() << '\n';
  }
}

std::vector<KeyJointRecord> load_key_joints(const std::filesystem::path& path, int joints) {
  std::ifstream in(path);
  if (!in) throw TextError("cannot open key-joint file " + path.string());
  std::vector<KeyJointRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (is_blank(line)) continue;
    try {
      const auto rec = json::parse(line);
      KeyJointRecord r;
      r.action = rec.at("action").get<std::string>();
      r.distribution.key = rec.at("K").get<std::vector<int>>();
      const auto target = rec.at("k_gt").get<std::vector<double>>();
      if (int(r.distribution.key.size()) != joints || int(target.size()) != joints) {
        throw TextError("key-joint record '" + r.action + "' has wrong length");
      }
      r.distribution.target = Eigen::Map<const Vec>(target.data(), Eigen::Index(target.size()));
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw TextError(std::string("malformed key-joint record: ") + e.what());
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Vec default_text_embedder(std::string_view text, int dim) {
  if (dim <= 0) throw TextError("text embedding dimension must be positive");
  Vec v = Vec::Zero(dim);
  for (const auto& token : tokenize_words(text)) v[Eigen::Index(fnv1a64(token) % std::uint64_t(dim))] += 1.0;
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

HashedBowEmbedder::HashedBowEmbedder(int dim) : dim_(dim) {
  if (dim <= 0) throw TextError("text embedding dimension must be positive");
}

std::unique_ptr<TextEmbedder> make_embedder(std::string_view name, int dim) {
  if (name == "hashed-bow" || name == "default") return std::make_unique<HashedBowEmbedder>(dim);
  throw TextError("unknown text embedder '" + std::string(name) + "'");
}

JointTextEmbeddings embed_joint_texts(const ActionDescription& desc, const TextEmbedder& embedder,
                                      const SkeletonTopology& topology) {
  const int v = topology.joint_count();
  if (int(desc.joint_texts.size()) != v) throw TextError("action '" + desc.action_name + "': joint text count mismatch");
  JointTextEmbeddings out;
  out.embedder_id = embedder.id();
  out.rows.resize(v, embedder.dim());
  for (int j = 0; j < v; ++j) {
    Vec row;
    try {
      row = embedder.embed(desc.joint_texts[std::size_t(j)]);
    } catch (const std::exception& e) {
      throw TextError("embedding joint '" + topology.joint_names[std::size_t(j)] + "' failed: " + e.what());
    }
    if (row.size() != embedder.dim() || !row.allFinite()) {
      throw TextError("embedder returned an invalid vector for joint '" + topology.joint_names[std::size_t(j)] + "'");
    }
    out.rows.row(j) = row.transpose();
  }
  return out;
}

void save_external_embeddings(const std::map<std::string, JointTextEmbeddings>& embeddings,
                              const SkeletonTopology& topology, const std::filesystem::path& manifest_path) {
  static_assert(std::endian::native == std::endian::little);
  int dim = -1;
  json manifest;
  manifest["joints_order"] = topology.joint_names;
  manifest["actions"] = json::array();
  auto blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  manifest["blob"] = blob_path.filename().string();

  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw TextError("cannot write " + blob_path.string());
  std::uint64_t offset = 0;
  for (const auto& [action, emb] : embeddings) {
    if (emb.rows.rows() != topology.joint_count()) throw TextError("embeddings for '" + action + "' have wrong row count");
    if (dim < 0) dim = int(emb.rows.cols());
    if (emb.rows.cols() != dim) throw TextError("embeddings have inconsistent dimensions");
    std::vector<float> values(std::size_t(emb.rows.size()));
    for (Eigen::Index i = 0; i < emb.rows.size(); ++i) values[std::size_t(i)] = float(emb.rows.data()[i]);
    blob.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size() * sizeof(float)));
    manifest["actions"].push_back({{"action", action}, {"offset", offset}, {"source", emb.embedder_id}});
    offset += values.size() * sizeof(float);
  }
  manifest["C_txt"] = std::max(dim, 0);
  std::ofstream out(manifest_path);
  if (!out) throw TextError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
}

std::map<std::string, JointTextEmbeddings> load_external_embeddings(const std::filesystem::path& manifest_path,
                                                                    const SkeletonTopology& topology) {
  std::ifstream in(manifest_path);
  if (!in) throw TextError("cannot open embedding manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw TextError(std::string("malformed embedding manifest: ") + e.what());
  }
  const auto order = manifest.at("joints_order").get<std::vector<std::string>>();
  const int v = topology.joint_count();
  if (int(order.size()) != v) {
    throw TextError("embedding joint count " + std::to_string(order.size()) + " does not match topology (" +
                    std::to_string(v) + ")");
  }
  std::vector<int> row_of(std::size_t(v), -1);
  for (int r = 0; r < v; ++r) {
    const auto j = topology.find_joint(order[std::size_t(r)]);
    if (!j) throw TextError("embedding manifest names unknown joint '" + order[std::size_t(r)] + "'");
    if (row_of[std::size_t(*j)] >= 0) throw TextError("embedding manifest repeats joint '" + order[std::size_t(r)] + "'");
    row_of[std::size_t(*j)] = r;
  }
  const int dim = manifest.at("C_txt").get<int>();
  if (dim <= 0) throw TextError("embedding dimension must be positive");

  const auto blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw TextError("cannot open embedding blob " + blob_path.string());
  blob.seekg(0, std::ios::end);
  const auto blob_size = std::uint64_t(blob.tellg());

  std::map<std::string, JointTextEmbeddings> out;
  const std::uint64_t bytes = std::uint64_t(v) * std::uint64_t(dim) * sizeof(float);
  for (const auto& entry : manifest.at("actions")) {
    const auto action = entry.at("action").get<std::string>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    if (offset + bytes > blob_size) throw TextError("embedding dimension mismatch for '" + action + "': blob too short");
    std::vector<float> values(std::size_t(v) * std::size_t(dim));
    blob.seekg(std::streamoff(offset));
    blob.read(reinterpret_cast<char*>(values.data()), std::streamsize(bytes));
    JointTextEmbeddings emb;
    emb.embedder_id = "external";
    emb.rows.resize(v, dim);
    for (int j = 0; j < v; ++j) {
      const int r = row_of[std::size_t(j)];
      for (int c = 0; c < dim; ++c) emb.rows(j, c) = double(values[std::size_t(r) * std::size_t(dim) + std::size_t(c)]);
    }
    if (!emb.rows.allFinite()) throw TextError("non-finite embedding values for '" + action + "'");
    out[action] = std::move(emb);
  }
  if (!manifest.at("actions").empty()) {
    // Every action occupies exactly V * C_txt floats; anything else means the
    // manifest dimension disagrees with the blob.
    if (blob_size != bytes * manifest.at("actions").size()) {
      throw TextError("embedding dimension mismatch: blob holds " + std::to_string(blob_size) + " bytes, expected " +
                      std::to_string(bytes * manifest.at("actions").size()));
    }
  }
  return out;
}

std::vector<ActionDescription> synthetic_descriptions(const std::vector<SyntheticClass>& classes,
                                                      const SkeletonTopology& topology) {
  std::vector<ActionDescription> out;
  for (const auto& cls : classes) {
    ActionDescription d;
    d.action_name = cls.name;
    std::string parts = "the " + cls.phrases.front();
    for (std::size_t i = 1; i < cls.phrases.size(); ++i) parts += " together with the " + cls.phrases[i];
    d.global_text = parts + " move in a " + cls.tempo_word +
                    " rhythmic pattern while the rest of the body stays still";
    d.joint_texts.resize(std::size_t(topology.joint_count()));
    for (int j = 0; j < topology.joint_count(); ++j) {
      const auto& joint = topology.joint_names[std::size_t(j)];
      const auto it = std::find(cls.joints.begin(), cls.joints.end(), j);
      if (it == cls.joints.end()) {
        d.joint_texts[std::size_t(j)] = capitalize(joint) + " stays still and stable.";
      } else {
        const auto k = std::size_t(it - cls.joints.begin());
        d.joint_texts[std::size_t(j)] = capitalize(joint) + " swings " + axis_phrase(cls.axes[k]) + " with a " +
                                        cls.tempo_word + " rhythmic motion.";
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace crossglg
