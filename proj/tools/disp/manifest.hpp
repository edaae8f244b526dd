#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace disp::cli {

// Helper record written beside every output: the effective configuration,
// its hash, the hashes of all inputs and the tool version. No timestamps, so
// identical runs write identical manifests.
struct Manifest {
  std::string subcommand;
  std::string config_json;  // effective merged configuration
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

std::string hash_file(const std::filesystem::path& path);
std::string hash_text(const std::string& text);

// Writes <first output>.manifest.json, or <dir>/manifest.json when the first
// output is a directory.
void write_manifest(const Manifest& manifest);

}  // namespace disp::cli
