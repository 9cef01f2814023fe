#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace osteoforge {

/// What the pixel values of an image are known to satisfy.
enum class RangeTag {
  raw,           ///< unconstrained (attenuation maps, raw DRR intensity)
  unit,          ///< every pixel in [0, 1]
  standardized,  ///< zero-mean / fixed-std normalized
  binary,        ///< every pixel is exactly 0 or 1
};

std::string_view to_string(RangeTag tag);
/// Throws LoadError("range") for an unknown name.
RangeTag range_tag_from_string(std::string_view name);

/// 2D scalar image, row-major. For projections the column index is the
/// volume x axis and the row index is the volume z axis.
class RadiographImage {
 public:
  RadiographImage() = default;
  RadiographImage(int width, int height, RangeTag tag, double fill = 0.0);
  /// Throws ShapeError if pixels.size() != width * height.
  RadiographImage(int width, int height, RangeTag tag, std::vector<double> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  RangeTag tag() const { return tag_; }
  void set_tag(RangeTag tag) { tag_ = tag; }

  std::span<const double> pixels() const { return pixels_; }
  std::span<double> pixels() { return pixels_; }
  double at(int x, int y) const { return pixels_[index(x, y)]; }
  double& at(int x, int y) { return pixels_[index(x, y)]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  bool same_dims(const RadiographImage& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  /// Checks the invariant implied by the tag (unit range, binary values).
  /// Throws ConfigError("range") on violation.
  void validate() const;

  friend bool operator==(const RadiographImage&, const RadiographImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  RangeTag tag_ = RangeTag::raw;
  std::vector<double> pixels_;
};

/// Throws ShapeError naming `what` when the two images differ in size.
void require_same_dims(const RadiographImage& a, const RadiographImage& b,
                       const std::string& what);

// `<name>.img.json` + `<name>.img.raw` (row-major little-endian float32).
// Pixels are stored as float32, so values round to single precision on disk.
void save_image(const RadiographImage& img, const std::filesystem::path& path);
RadiographImage load_image(const std::filesystem::path& path);
std::filesystem::path image_header_path(const std::filesystem::path& path);

/// Binary 16-bit PGM (P5, maxval 65535), min -> 0 and max -> 65535 linearly;
/// a constant image exports as all zeros.
void export_pgm16(const RadiographImage& img, const std::filesystem::path& path);

}  // namespace osteoforge
