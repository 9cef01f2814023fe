#pragma once

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <filesystem>
#include <string>

namespace testutil {

/// Fresh empty directory under OSTEOFORGE_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* env = std::getenv("OSTEOFORGE_TEST_TMP");
  const std::filesystem::path root =
      env ? std::filesystem::path(env) : std::filesystem::temp_directory_path() / "osteoforge_tests";
  const auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
