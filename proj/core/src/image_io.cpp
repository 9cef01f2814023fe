#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "osteoforge/image.hpp"

namespace osteoforge {

using detail::json;

std::filesystem::path image_header_path(const std::filesystem::path& path) {
  return detail::strip_suffix(path, "img").string() + ".img.json";
}

void save_image(const RadiographImage& img, const std::filesystem::path& path) {
  const std::filesystem::path stem = detail::strip_suffix(path, "img");
  const std::filesystem::path header = stem.string() + ".img.json";
  const std::filesystem::path raw = stem.string() + ".img.raw";

  std::vector<char> bytes;
  bytes.reserve(img.size() * 4);
  for (double p : img.pixels()) detail::append_f32le(bytes, static_cast<float>(p));

  json h;
  h["width"] = img.width();
  h["height"] = img.height();
  h["dtype"] = "f32le";
  h["range"] = std::string(to_string(img.tag()));
  h["data"] = raw.filename().string();

  detail::write_file(raw, bytes);
  detail::write_text(header, h.dump(2) + "\n");
}

RadiographImage load_image(const std::filesystem::path& path) {
  const std::filesystem::path header = image_header_path(path);
  const json h = detail::read_json(header);
  const int width = detail::require<int>(h, "width");
  const int height = detail::require<int>(h, "height");
  const auto dtype = detail::require<std::string>(h, "dtype");
  const RangeTag tag = range_tag_from_string(detail::require<std::string>(h, "range"));
  const auto data_name = detail::require<std::string>(h, "data");
  if (dtype != "f32le") throw LoadError("dtype", "unsupported dtype '" + dtype + "'");
  if (width <= 0) throw LoadError("width", "must be positive");
  if (height <= 0) throw LoadError("height", "must be positive");

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const auto bytes = detail::read_file(header.parent_path() / data_name);
  if (bytes.size() != count * 4) {
    throw LoadError("data", "raw length " + std::to_string(bytes.size()) +
                                " bytes, header requires " + std::to_string(count * 4));
  }
  std::vector<double> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    pixels[i] = static_cast<double>(detail::read_f32le(bytes.data() + 4 * i));
  }
  RadiographImage img(width, height, tag, std::move(pixels));
  try {
    img.validate();
  } catch (const Error& e) {
    throw LoadError("range", e.what());
  }
  return img;
}

void export_pgm16(const RadiographImage& img, const std::filesystem::path& path) {
  const auto [lo_it, hi_it] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  std::string header = "P5\n" + std::to_string(img.width()) + " " +
                       std::to_string(img.height()) + "\n65535\n";
  std::vector<char> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.size() * 2);
  for (double p : img.pixels()) {
    const double t = span > 0 ? (p - lo) / span : 0.0;
    const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
    // PGM samples wider than one byte are big-endian.
    bytes.push_back(static_cast<char>((v >> 8) & 0xFF));
    bytes.push_back(static_cast<char>(v & 0xFF));
  }
  detail::write_file(path, bytes);
}

}  // namespace osteoforge
