#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace tmm::cli {

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Reproduction record written next to every run's outputs.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t seed = 0;
  std::string config_text;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::vector<std::pair<std::string, std::string>> extra;
};

// Writes <dir>/manifest.json with content hashes of inputs and outputs.
void write_manifest(const Manifest& manifest, const std::filesystem::path& dir);

}  // namespace tmm::cli
