#include "options.hpp"

#include <fstream>
#include <set>

#include "osteoforge/error.hpp"
#include "osteoforge/version.hpp"

namespace osteoforge::cli {

namespace {

const std::set<std::string> kSkipped = {"help", "config", "manifest"};

json read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string(), "cannot open config file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string(), e.what());
  }
}

std::string scalar_text(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw ConfigError(key, "config values must be strings, numbers, booleans or arrays of those");
}

json typed(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  try {
    std::size_t used = 0;
    if (text.find_first_of(".eE") == std::string::npos) {
      const long long i = std::stoll(text, &used);
      if (used == text.size()) return i;
    }
    const double d = std::stod(text, &used);
    // Keep the original text when the double would not print it back.
    if (used == text.size() && json(d).dump() == text) return d;
  } catch (const std::exception&) {
  }
  return text;
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.size() < 2) return args;
  std::vector<std::string> rest;
  std::filesystem::path config;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].starts_with("--config=")) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  std::vector<std::string> out{args[0], args[1]};
  if (!config.empty()) {
    json j = read_config(config);
    if (j.contains("subcommand") && j.contains("options")) {
      if (j["subcommand"] != args[1]) {
        throw ConfigError("config", "manifest is for '" + j["subcommand"].get<std::string>() + "', not '" + args[1] + "'");
      }
      j = j["options"];
    } else if (j.contains(args[1]) && j[args[1]].is_object()) {
      j = j[args[1]];
    }
    if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (kSkipped.contains(key)) continue;
      if (value.is_null()) continue;
      if (value.is_array()) {
        out.push_back("--" + key);
        for (const auto& v : value) out.push_back(scalar_text(v, key));
      } else {
        out.push_back("--" + key + "=" + scalar_text(value, key));
      }
    }
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

json resolved_options(const CLI::App& sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& key = opt->get_lnames().front();
    if (kSkipped.contains(key)) continue;
    const bool is_flag = opt->get_expected_max() == 0;
    if (is_flag) {
      out[key] = opt->count() > 0 && opt->as<bool>();
      continue;
    }
    const std::vector<std::string> given = opt->results();
    if (opt->get_items_expected_max() > 1) {
      json arr = json::array();
      for (const auto& v : given) arr.push_back(typed(v));
      out[key] = arr;
    } else if (!given.empty()) {
      out[key] = typed(given.back());
    } else if (!opt->get_default_str().empty()) {
      out[key] = typed(opt->get_default_str());
    } else {
      out[key] = nullptr;
    }
  }
  return out;
}

void write_manifest(const CLI::App& sub, const RunRecord& run, const std::filesystem::path& path) {
  json j;
  j["tool"] = "osteoforge";
  j["version"] = std::string(version());
  j["subcommand"] = sub.get_name();
  j["options"] = resolved_options(sub);
  j["seed"] = j["options"].value("seed", json(0));
  j["inputs"] = json::array();
  for (const auto& p : run.inputs) j["inputs"].push_back(p.generic_string());
  j["outputs"] = json::array();
  for (const auto& p : run.outputs) j["outputs"].push_back(p.generic_string());
  if (!run.extra.empty()) j["result"] = run.extra;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("manifest", "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace osteoforge::cli
