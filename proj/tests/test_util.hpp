#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace miss::test {

// Writes `content` to a fresh file under the system temp directory.
inline std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("miss_test_" + name);
  std::ofstream(path) << content;
  return path.string();
}

}  // namespace miss::test
