#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace osteoforge {

using Hu = std::int16_t;

inline constexpr Hu kMinHu = -1024;
inline constexpr Hu kMaxHu = 3071;
/// Replacement value for voxels outside a bone window.
inline constexpr Hu kAirHu = -1024;
/// Background of generated phantoms; contributes exactly zero attenuation.
inline constexpr Hu kBackgroundHu = -1000;

struct Dims3 {
  int x = 0;
  int y = 0;
  int z = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) *
           static_cast<std::size_t>(z);
  }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

struct Spacing3 {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;
  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

/// 3D CT volume in Hounsfield units, x-fastest: index = x + X*(y + Y*z).
/// Projection rays run along y.
class Volume {
 public:
  Volume() = default;
  /// Throws ConfigError on non-positive dims/spacing, wrong data length or a
  /// value outside [kMinHu, kMaxHu].
  Volume(Dims3 dims, Spacing3 spacing, std::vector<Hu> data);
  Volume(Dims3 dims, Spacing3 spacing, Hu fill);

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::span<const Hu> data() const { return data_; }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.x) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
  }
  Hu at(int x, int y, int z) const { return data_[index(x, y, z)]; }
  /// Throws ConfigError if `value` is outside the HU range.
  void set(int x, int y, int z, Hu value);

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims3 dims_;
  Spacing3 spacing_;
  std::vector<Hu> data_;
};

/// Ellipsoidal nodule in voxel coordinates.
struct NoduleAnnotation {
  std::array<double, 3> center_vox{};
  std::array<double, 3> radii_vox{};

  /// Throws ConfigError unless radii > 0 and the center lies in the volume.
  void validate(const Dims3& dims) const;
  friend bool operator==(const NoduleAnnotation&, const NoduleAnnotation&) = default;
};

/// Keeps voxels with lo <= HU <= hi and sets every other voxel to kAirHu.
Volume bone_window(const Volume& vol, Hu lo, Hu hi);

inline constexpr Hu kBoneWindowLo = 300;
inline constexpr Hu kBoneWindowHi = 700;

// On-disk format: `<name>.vol.json` header plus `<name>.vol.raw` with
// little-endian int16 samples. `path` may be the header path or the bare
// stem; the raw file always sits next to the header.
void save_volume(const Volume& vol, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

/// `<name>.nod.json`: array of {"center_vox":[..],"radii_vox":[..]}.
void save_annotations(std::span<const NoduleAnnotation> nodules,
                      const std::filesystem::path& path);
std::vector<NoduleAnnotation> load_annotations(const std::filesystem::path& path);

/// Header path for a stem such as "out/ct01" -> "out/ct01.vol.json".
std::filesystem::path volume_header_path(const std::filesystem::path& path);

}  // namespace osteoforge
