#include "osteoforge/dataset.hpp"

#include "binary_io.hpp"

namespace osteoforge {

using detail::json;

namespace {

std::string relative_if_inside(const std::filesystem::path& p, const std::filesystem::path& dir) {
  const auto abs = std::filesystem::absolute(p).lexically_normal();
  const auto rel = abs.lexically_relative(dir);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return abs.generic_string();
}

}  // namespace

void save_dataset(const std::vector<DatasetEntry>& entries, const std::filesystem::path& path) {
  const auto dir = std::filesystem::absolute(path).lexically_normal().parent_path();
  json pairs = json::array();
  for (const auto& e : entries) {
    pairs.push_back({{"source", relative_if_inside(e.source, dir)},
                     {"target", relative_if_inside(e.target, dir)},
                     {"mask", relative_if_inside(e.mask, dir)}});
  }
  detail::write_text(path, json{{"pairs", pairs}}.dump(2) + "\n");
}

std::vector<DatasetEntry> load_dataset(const std::filesystem::path& path) {
  const json h = detail::read_json(path);
  const auto pairs = detail::require<json>(h, "pairs");
  if (!pairs.is_array()) throw LoadError("pairs", "must be an array");
  const auto dir = path.parent_path();
  std::vector<DatasetEntry> out;
  for (const auto& p : pairs) {
    auto resolve = [&](const char* key) {
      const std::filesystem::path v = detail::require<std::string>(p, key);
      return v.is_absolute() ? v : dir / v;
    };
    out.push_back({resolve("source"), resolve("target"), resolve("mask")});
  }
  return out;
}

TrainingPair load_pair(const DatasetEntry& entry) {
  TrainingPair pair{load_image(entry.source), load_image(entry.target), load_image(entry.mask)};
  require_same_dims(pair.source, pair.target, entry.target.string());
  require_same_dims(pair.source, pair.nodule_mask, entry.mask.string());
  return pair;
}

std::vector<TrainingPair> load_pairs(const std::vector<DatasetEntry>& entries) {
  std::vector<TrainingPair> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(load_pair(e));
  return out;
}

DatasetEntry save_pair(const TrainingPair& pair, const std::filesystem::path& stem) {
  DatasetEntry e{stem.string() + "_source.img.json", stem.string() + "_target.img.json",
                 stem.string() + "_mask.img.json"};
  save_image(pair.source, e.source);
  save_image(pair.target, e.target);
  save_image(pair.nodule_mask, e.mask);
  return e;
}

}  // namespace osteoforge
