#include "osteoforge/image.hpp"

#include <cmath>

#include "osteoforge/error.hpp"

namespace osteoforge {

std::string_view to_string(RangeTag tag) {
  switch (tag) {
    case RangeTag::raw: return "raw";
    case RangeTag::unit: return "unit";
    case RangeTag::standardized: return "standardized";
    case RangeTag::binary: return "binary";
  }
  return "raw";
}

RangeTag range_tag_from_string(std::string_view name) {
  if (name == "raw") return RangeTag::raw;
  if (name == "unit") return RangeTag::unit;
  if (name == "standardized") return RangeTag::standardized;
  if (name == "binary") return RangeTag::binary;
  throw LoadError("range", "unknown range tag '" + std::string(name) + "'");
}

RadiographImage::RadiographImage(int width, int height, RangeTag tag, double fill)
    : width_(width), height_(height), tag_(tag) {
  if (width <= 0 || height <= 0) throw ShapeError("dims", "image dimensions must be positive");
  pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

RadiographImage::RadiographImage(int width, int height, RangeTag tag,
                                 std::vector<double> pixels)
    : width_(width), height_(height), tag_(tag), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw ShapeError("dims", "image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ShapeError("pixels", "pixel count does not match width*height");
  }
}

void RadiographImage::validate() const {
  if (tag_ == RangeTag::unit) {
    for (double p : pixels_) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("range", "unit image has pixel outside [0,1]");
    }
  } else if (tag_ == RangeTag::binary) {
    for (double p : pixels_) {
      if (p != 0.0 && p != 1.0) throw ConfigError("range", "binary image has non-binary pixel");
    }
  }
}

void require_same_dims(const RadiographImage& a, const RadiographImage& b,
                       const std::string& what) {
  if (!a.same_dims(b)) {
    throw ShapeError(what, std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                               " vs " + std::to_string(b.width()) + "x" +
                               std::to_string(b.height()));
  }
}

}  // namespace osteoforge
