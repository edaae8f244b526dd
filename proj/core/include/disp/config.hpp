#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "disp/eval.hpp"

namespace disp {

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

// Labeled TSV splits plus a .vec corpus, used instead of a synthetic task.
struct FileTaskConfig {
  std::string id = "files";
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path corpus;
  int num_classes = 2;
};

struct RunConfig {
  static constexpr int kVersion = 1;

  std::uint64_t seed = 1;  // model seed
  std::size_t threads = 1;
  SyntheticTaskSpec task;
  std::optional<FileTaskConfig> files;
  // Second task for transfer runs: discriminator and estimator learn from it.
  SyntheticTaskSpec transfer_task;
  PipelineConfig pipeline;
  EvalOptions eval;
  std::size_t sweep_max_attacks = 3;
  std::filesystem::path output_dir = "out";
};

// Defaults used when a key is omitted from the config file.
RunConfig default_run_config();

// Strict parse: the version must match and every key must be known.
RunConfig parse_run_config(const std::string& json_text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical JSON with every key present; feeding it back to
// parse_run_config reproduces the config.
std::string run_config_to_json(const RunConfig& config);

// Materializes the configured task (synthetic or from files).
SyntheticTask load_task(const RunConfig& config);

}  // namespace disp
