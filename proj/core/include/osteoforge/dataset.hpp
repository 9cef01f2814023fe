#pragma once

#include <filesystem>
#include <vector>

#include "osteoforge/projector.hpp"

namespace osteoforge {

struct DatasetEntry {
  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path mask;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

/// `dataset.json` {"pairs":[{"source","target","mask"}...]}. Paths are
/// written relative to the manifest's directory when they lie under it and
/// resolved against that directory on load.
void save_dataset(const std::vector<DatasetEntry>& entries, const std::filesystem::path& path);
std::vector<DatasetEntry> load_dataset(const std::filesystem::path& path);

TrainingPair load_pair(const DatasetEntry& entry);
std::vector<TrainingPair> load_pairs(const std::vector<DatasetEntry>& entries);

/// Writes the three images of a pair as `<stem>_source`, `<stem>_target`,
/// `<stem>_mask` and returns their entry.
DatasetEntry save_pair(const TrainingPair& pair, const std::filesystem::path& stem);

}  // namespace osteoforge
