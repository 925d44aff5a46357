#pragma once

#include "crossglg/eval.hpp"
#include "crossglg/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace crossglg {

/// Everything a command needs: model settings, file locations and evaluation
/// settings. Read from a JSON config file, then overridden by flags.
struct RunConfig {
  ModelConfig model = desk_config();
  std::filesystem::path data;          // dataset (.jsonl or .bin)
  std::filesystem::path descriptions;  // action descriptions (.jsonl)
  std::filesystem::path embeddings;    // optional external embedding manifest
  std::filesystem::path output;
  std::filesystem::path checkpoint;
  std::string base_classes;  // class list such as "0-9"; empty uses `split`
  std::filesystem::path split;
  std::string embedder = "hashed-bow";
  EvalOptions eval;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Overlays the keys present in `j` onto `c`.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Relative paths resolve against the data root (CROSSGLG_DATA_DIR) when they
/// do not exist relative to the working directory.
std::filesystem::path resolve_input(const std::filesystem::path& p);

/// Runs one command line. Returns the process exit status; on failure a
/// single line `error code=<kind> message="..."` goes to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Exit statuses of run_cli.
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitText = 5;
inline constexpr int kExitOther = 1;

}  // namespace crossglg
