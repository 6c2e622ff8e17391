#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace probode::experiments {

// Invalid or unknown configuration: maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while computing (singular systems, non-finite values): exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PresetInfo {
  std::string name;
  std::string description;
};

// Catalogue of ready-made experiment configurations.
const std::vector<PresetInfo>& presets();

// Full default configuration of a preset as pretty-printed JSON.
std::string preset_config_text(const std::string& name);

// Full schema validation (types, ranges, unknown keys) without running.
void validate_config_text(const std::string& json_text);

struct RunResult {
  std::filesystem::path manifest_path;
  std::vector<std::string> outputs;  // file names relative to the output directory
};

// Executes the configured experiment into out_dir, writing the result files
// plus a manifest (resolved config, seed, library version, output list).
// Identical config and seed reproduce identical files bitwise.
RunResult run_config_text(const std::string& json_text, const std::filesystem::path& out_dir,
                          std::optional<std::uint64_t> seed_override = std::nullopt);
RunResult run_config_file(const std::filesystem::path& config_path,
                          const std::filesystem::path& out_dir,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace probode::experiments
