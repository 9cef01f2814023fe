#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace osteoforge::cli {

using json = nlohmann::json;

/// Expands `--config FILE` into `--key=value` arguments placed right after
/// the subcommand name, ahead of the user's own arguments, so explicit flags
/// win over config values (options take the last value) and config values
/// win over defaults. FILE is a flat JSON object of long option names, an
/// object keyed by subcommand, or a run manifest.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

/// Every long option of `sub` with its effective value, defaults included.
/// Skips help and config.
json resolved_options(const CLI::App& sub);

struct RunRecord {
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  /// Where the manifest goes unless --manifest overrides it.
  std::filesystem::path manifest;
  json extra = json::object();
};

void write_manifest(const CLI::App& sub, const RunRecord& run, const std::filesystem::path& path);

}  // namespace osteoforge::cli
