#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "options.hpp"

namespace osteoforge::cli {

struct Common {
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::filesystem::path manifest;
  std::filesystem::path config;
};

using Runner = std::function<RunRecord(const Common&)>;

struct Command {
  CLI::App* app = nullptr;
  Runner run;
  /// Exit status after a successful run; gradcheck reports failures here.
  std::function<int()> status = [] { return 0; };
};

std::vector<Command> register_commands(CLI::App& app, Common& common);

/// `<out>.run.json` next to a file output, `<dir>/run.json` for a directory.
std::filesystem::path manifest_next_to(const std::filesystem::path& output);

}  // namespace osteoforge::cli
