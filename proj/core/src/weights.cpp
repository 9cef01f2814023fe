#include "osteoforge/weights.hpp"

#include <set>

#include "binary_io.hpp"

namespace osteoforge {

using detail::json;

std::size_t NamedTensor::numel() const {
  std::size_t n = shape.empty() ? 0 : 1;
  for (int d : shape) n *= static_cast<std::size_t>(d > 0 ? d : 0);
  return n;
}

const NamedTensor* ModelWeights::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void ModelWeights::validate() const {
  std::set<std::string> seen;
  for (const auto& t : tensors) {
    if (t.name.empty()) throw ConfigError("tensors", "empty tensor name");
    if (!seen.insert(t.name).second) throw ConfigError(t.name, "duplicate tensor name");
    for (int d : t.shape)
      if (d <= 0) throw ConfigError(t.name, "non-positive dimension");
    if (t.values.size() != t.numel()) {
      throw ConfigError(t.name, std::to_string(t.values.size()) + " values for " +
                                    std::to_string(t.numel()) + " elements");
    }
  }
  if (input_offset && input_scale && input_offset->size() != input_scale->size()) {
    throw ConfigError("input_scale", "length differs from input_offset");
  }
}

std::filesystem::path weights_header_path(const std::filesystem::path& path) {
  return detail::strip_suffix(path, "wts").string() + ".wts.json";
}

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
  w.validate();
  const std::filesystem::path stem = detail::strip_suffix(path, "wts");
  const std::filesystem::path header = stem.string() + ".wts.json";
  const std::filesystem::path raw = stem.string() + ".wts.raw";

  std::vector<char> bytes;
  json list = json::array();
  for (const auto& t : w.tensors) {
    const std::size_t offset = bytes.size();
    for (float v : t.values) detail::append_f32le(bytes, v);
    list.push_back({{"name", t.name},
                    {"shape", t.shape},
                    {"dtype", "f32le"},
                    {"offset", offset},
                    {"len", bytes.size() - offset}});
  }
  json h;
  h["tensors"] = std::move(list);
  h["data"] = raw.filename().string();
  if (w.input_offset) h["input_offset"] = *w.input_offset;
  if (w.input_scale) h["input_scale"] = *w.input_scale;
  if (!w.attributes.empty()) h["attributes"] = w.attributes;

  detail::write_file(raw, bytes);
  detail::write_text(header, h.dump(2) + "\n");
}

ModelWeights load_weights(const std::filesystem::path& path) {
  const std::filesystem::path header = weights_header_path(path);
  const json h = detail::read_json(header);
  const auto entries = detail::require<json>(h, "tensors");
  if (!entries.is_array()) throw LoadError("tensors", "must be an array");
  std::string data_name = detail::strip_suffix(header, "wts").filename().string() + ".wts.raw";
  if (h.contains("data")) data_name = detail::require<std::string>(h, "data");
  const auto bytes = detail::read_file(header.parent_path() / data_name);

  ModelWeights w;
  std::size_t expected_offset = 0;
  for (const auto& e : entries) {
    NamedTensor t;
    t.name = detail::require<std::string>(e, "name");
    t.shape = detail::require<std::vector<int>>(e, "shape");
    const auto dtype = detail::require<std::string>(e, "dtype");
    const auto offset = detail::require<std::size_t>(e, "offset");
    const auto len = detail::require<std::size_t>(e, "len");
    if (dtype != "f32le") throw LoadError(t.name, "unsupported dtype '" + dtype + "'");
    for (int d : t.shape)
      if (d <= 0) throw LoadError(t.name, "non-positive dimension");
    if (offset != expected_offset) throw LoadError(t.name, "offsets must be ascending and densely packed");
    if (len != t.numel() * 4) throw LoadError(t.name, "byte length does not match shape");
    if (offset + len > bytes.size()) throw LoadError(t.name, "extends past the end of the blob");
    t.values.resize(t.numel());
    for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = detail::read_f32le(bytes.data() + offset + 4 * i);
    expected_offset = offset + len;
    w.tensors.push_back(std::move(t));
  }
  if (expected_offset != bytes.size()) throw LoadError("data", "blob has trailing bytes");
  if (h.contains("input_offset")) w.input_offset = detail::require<std::vector<double>>(h, "input_offset");
  if (h.contains("input_scale")) w.input_scale = detail::require<std::vector<double>>(h, "input_scale");
  if (h.contains("attributes")) w.attributes = detail::require<std::map<std::string, double>>(h, "attributes");
  try {
    w.validate();
  } catch (const ConfigError& e) {
    throw LoadError(e.field(), e.what());
  }
  return w;
}

}  // namespace osteoforge
