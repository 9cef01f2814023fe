#include "osteoforge/volume.hpp"

#include <string>

#include "osteoforge/error.hpp"

namespace osteoforge {
namespace {

void check_geometry(const Dims3& dims, const Spacing3& spacing) {
  if (dims.x <= 0) throw ConfigError("dims.x", "must be positive");
  if (dims.y <= 0) throw ConfigError("dims.y", "must be positive");
  if (dims.z <= 0) throw ConfigError("dims.z", "must be positive");
  if (!(spacing.x > 0)) throw ConfigError("spacing_mm.x", "must be positive");
  if (!(spacing.y > 0)) throw ConfigError("spacing_mm.y", "must be positive");
  if (!(spacing.z > 0)) throw ConfigError("spacing_mm.z", "must be positive");
}

void check_hu(Hu value, const char* field) {
  if (value < kMinHu || value > kMaxHu) {
    throw ConfigError(field, "HU value " + std::to_string(value) + " outside [" +
                                 std::to_string(kMinHu) + ", " +
                                 std::to_string(kMaxHu) + "]");
  }
}

}  // namespace

Volume::Volume(Dims3 dims, Spacing3 spacing, std::vector<Hu> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_geometry(dims_, spacing_);
  if (data_.size() != dims_.count()) {
    throw ConfigError("data", "expected " + std::to_string(dims_.count()) +
                                  " voxels, got " + std::to_string(data_.size()));
  }
  for (Hu v : data_) check_hu(v, "data");
}

Volume::Volume(Dims3 dims, Spacing3 spacing, Hu fill)
    : dims_(dims), spacing_(spacing) {
  check_geometry(dims_, spacing_);
  check_hu(fill, "fill");
  data_.assign(dims_.count(), fill);
}

void Volume::set(int x, int y, int z, Hu value) {
  check_hu(value, "value");
  data_[index(x, y, z)] = value;
}

void NoduleAnnotation::validate(const Dims3& dims) const {
  static constexpr const char* kRadius[] = {"radii_vox[0]", "radii_vox[1]",
                                            "radii_vox[2]"};
  static constexpr const char* kCenter[] = {"center_vox[0]", "center_vox[1]",
                                            "center_vox[2]"};
  const int extent[3] = {dims.x, dims.y, dims.z};
  for (int a = 0; a < 3; ++a) {
    if (!(radii_vox[a] > 0)) throw ConfigError(kRadius[a], "must be positive");
    if (!(center_vox[a] >= 0 && center_vox[a] < extent[a])) {
      throw ConfigError(kCenter[a], "outside volume bounds");
    }
  }
}

Volume bone_window(const Volume& vol, Hu lo, Hu hi) {
  if (lo > hi) throw ConfigError("window", "lower bound exceeds upper bound");
  std::vector<Hu> out(vol.data().begin(), vol.data().end());
  for (Hu& v : out) {
    if (v < lo || v > hi) v = kAirHu;
  }
  return Volume(vol.dims(), vol.spacing(), std::move(out));
}

}  // namespace osteoforge
