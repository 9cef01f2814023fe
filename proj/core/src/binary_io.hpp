// Internal helpers for the little-endian raw blobs and JSON headers shared by
// the volume, image and weight formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "osteoforge/error.hpp"

namespace osteoforge::detail {

using nlohmann::json;

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open file");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<char> bytes(size);
  if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size))) {
    throw LoadError(path.string(), "read failed");
  }
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string(), "cannot open file for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(path.string(), "write failed");
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span<const char>(text.data(), text.size()));
}

inline json read_json(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw LoadError(path.string(), std::string("malformed JSON: ") + e.what());
  }
}

inline void append_i16le(std::vector<char>& out, std::int16_t v) {
  const auto u = static_cast<std::uint16_t>(v);
  out.push_back(static_cast<char>(u & 0xFFu));
  out.push_back(static_cast<char>((u >> 8) & 0xFFu));
}

inline std::int16_t read_i16le(const char* p) {
  const auto lo = static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]));
  const auto hi = static_cast<std::uint16_t>(static_cast<unsigned char>(p[1]));
  return static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
}

inline void append_f32le(std::vector<char>& out, float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((u >> s) & 0xFFu));
}

inline float read_f32le(const char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) {
    u |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<float>(u);
}

/// Fetches `key` from a header object, naming the key on failure.
template <class T>
T require(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) throw LoadError(key, "missing field");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw LoadError(key, std::string("wrong type: ") + e.what());
  }
}

/// Strips a trailing ".<kind>.json" (or ".<kind>.raw"), giving the stem.
inline std::filesystem::path strip_suffix(const std::filesystem::path& path,
                                          std::string_view kind) {
  const std::string s = path.string();
  for (const std::string& ext : {"." + std::string(kind) + ".json",
                                "." + std::string(kind) + ".raw"}) {
    if (s.size() > ext.size() && s.compare(s.size() - ext.size(), ext.size(), ext) == 0) {
      return s.substr(0, s.size() - ext.size());
    }
  }
  return path;
}

}  // namespace osteoforge::detail
