#include <array>
#include <string>

#include "binary_io.hpp"
#include "osteoforge/volume.hpp"

namespace osteoforge {

using detail::json;

std::filesystem::path volume_header_path(const std::filesystem::path& path) {
  return detail::strip_suffix(path, "vol").string() + ".vol.json";
}

void save_volume(const Volume& vol, const std::filesystem::path& path) {
  const std::filesystem::path stem = detail::strip_suffix(path, "vol");
  const std::filesystem::path header = stem.string() + ".vol.json";
  const std::filesystem::path raw = stem.string() + ".vol.raw";

  std::vector<char> bytes;
  bytes.reserve(vol.data().size() * 2);
  for (Hu v : vol.data()) detail::append_i16le(bytes, v);

  json h;
  h["dims"] = {vol.dims().x, vol.dims().y, vol.dims().z};
  h["spacing_mm"] = {vol.spacing().x, vol.spacing().y, vol.spacing().z};
  h["dtype"] = "i16le";
  h["data"] = raw.filename().string();

  detail::write_file(raw, bytes);
  detail::write_text(header, h.dump(2) + "\n");
}

Volume load_volume(const std::filesystem::path& path) {
  const std::filesystem::path header = volume_header_path(path);
  const json h = detail::read_json(header);

  const auto dims = detail::require<std::array<int, 3>>(h, "dims");
  const auto spacing = detail::require<std::array<double, 3>>(h, "spacing_mm");
  const auto dtype = detail::require<std::string>(h, "dtype");
  const auto data_name = detail::require<std::string>(h, "data");
  if (dtype != "i16le") throw LoadError("dtype", "unsupported dtype '" + dtype + "'");
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw LoadError("dims", "dimensions must be positive");
    if (!(spacing[a] > 0)) throw LoadError("spacing_mm", "spacing must be positive");
  }

  const Dims3 d{dims[0], dims[1], dims[2]};
  const auto bytes = detail::read_file(header.parent_path() / data_name);
  if (bytes.size() != d.count() * 2) {
    throw LoadError("data", "raw length " + std::to_string(bytes.size()) +
                                " bytes, header requires " +
                                std::to_string(d.count() * 2));
  }
  std::vector<Hu> voxels(d.count());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    voxels[i] = detail::read_i16le(bytes.data() + 2 * i);
    if (voxels[i] < kMinHu || voxels[i] > kMaxHu) {
      throw LoadError("data", "HU value " + std::to_string(voxels[i]) +
                                  " out of range at voxel " + std::to_string(i));
    }
  }
  return Volume(d, Spacing3{spacing[0], spacing[1], spacing[2]}, std::move(voxels));
}

void save_annotations(std::span<const NoduleAnnotation> nodules,
                      const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& n : nodules) {
    arr.push_back({{"center_vox", n.center_vox}, {"radii_vox", n.radii_vox}});
  }
  detail::write_text(path, arr.dump(2) + "\n");
}

std::vector<NoduleAnnotation> load_annotations(const std::filesystem::path& path) {
  const json arr = detail::read_json(path);
  if (!arr.is_array()) throw LoadError(path.string(), "expected a JSON array");
  std::vector<NoduleAnnotation> out;
  for (const auto& item : arr) {
    NoduleAnnotation n;
    n.center_vox = detail::require<std::array<double, 3>>(item, "center_vox");
    n.radii_vox = detail::require<std::array<double, 3>>(item, "radii_vox");
    for (double r : n.radii_vox) {
      if (!(r > 0)) throw LoadError("radii_vox", "radii must be positive");
    }
    out.push_back(n);
  }
  return out;
}

}  // namespace osteoforge
