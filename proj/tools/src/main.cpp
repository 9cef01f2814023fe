#include <fstream>
#include <iostream>

#include "commands.hpp"
#include "osteoforge/error.hpp"
#include "osteoforge/parallel.hpp"
#include "osteoforge/version.hpp"

namespace {

using osteoforge::cli::json;

int report_error(const char* kind, const std::string& field, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"field", field}, {"message", message}}}}.dump() << "\n";
  return code;
}

/// `replay MANIFEST` becomes `<subcommand> --config MANIFEST`.
std::vector<std::string> rewrite_replay(std::vector<std::string> args) {
  if (args.size() < 3 || args[1] != "replay" || args[2].starts_with("-")) return args;
  std::ifstream in(args[2]);
  if (!in) throw osteoforge::LoadError(args[2], "cannot open manifest");
  const json m = json::parse(in, nullptr, false);
  if (m.is_discarded() || !m.contains("subcommand") || !m["subcommand"].is_string()) {
    throw osteoforge::LoadError(args[2], "not a run manifest");
  }
  std::vector<std::string> out{args[0], m["subcommand"].get<std::string>(), "--config", args[2]};
  out.insert(out.end(), args.begin() + 3, args.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace osteoforge;
  CLI::App app{"osteoforge: DRR synthesis, bone-extraction training and selective bone enhancement"};
  app.name("osteoforge");
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.get_formatter()->column_width(36);

  cli::Common common;
  auto commands = cli::register_commands(app, common);
  CLI::App* replay = app.add_subcommand("replay", "Re-run a command from its run manifest");
  replay->add_option("manifest", "Run manifest written by an earlier command")->required();

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = cli::expand_config(rewrite_replay(std::move(args)));
    // CLI11 consumes the vector from the back.
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    return report_error("ConfigError", e.field(), e.what(), 2);
  } catch (const std::exception& e) {
    return report_error("Error", "", e.what(), 1);
  }

  for (auto& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      if (common.deterministic) set_worker_threads(1);
      const cli::RunRecord rec = cmd.run(common);
      const auto path = common.manifest.empty() ? rec.manifest : common.manifest;
      cli::write_manifest(*cmd.app, rec, path);
      return cmd.status();
    } catch (const LoadError& e) {
      return report_error("LoadError", e.field(), e.what(), 3);
    } catch (const ShapeError& e) {
      return report_error("ShapeError", e.field(), e.what(), 2);
    } catch (const Error& e) {
      return report_error("ConfigError", e.field(), e.what(), 2);
    } catch (const std::exception& e) {
      return report_error("Error", "", e.what(), 1);
    }
  }
  return report_error("ConfigError", "replay", "replay needs a manifest path", 2);
}
