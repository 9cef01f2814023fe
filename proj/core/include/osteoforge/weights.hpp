#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace osteoforge {

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;

  std::size_t numel() const;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Ordered named tensors plus optional metadata. Names are unique.
struct ModelWeights {
  std::vector<NamedTensor> tensors;
  /// Per-channel input transform of a loss network, out = scale * x + offset.
  std::optional<std::vector<double>> input_offset;
  std::optional<std::vector<double>> input_scale;
  /// Free-form numeric attributes (the generating network config).
  std::map<std::string, double> attributes;

  const NamedTensor* find(const std::string& name) const;
  /// Throws ConfigError naming the first duplicate or ill-sized tensor.
  void validate() const;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

// `<name>.wts.json` manifest + `<name>.wts.raw` blob of little-endian float32.
// Tensor offsets and lengths are in bytes, ascending and densely packed.
void save_weights(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);
std::filesystem::path weights_header_path(const std::filesystem::path& path);

}  // namespace osteoforge
