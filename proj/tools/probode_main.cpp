// Experiment driver: runs JSON-configured studies, lists the preset
// catalogue, and validates configurations.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "probode/experiments.hpp"
#include "probode/version.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitNumericalError = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probode: randomized ODE/FEM solvers with calibration and inference experiments"};
  app.set_version_flag("--version", std::string(probode::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Path to the experiment config (JSON)")->required();
  std::uint64_t seed_value = 0;
  CLI::Option* seed_opt = run->add_option("--seed", seed_value, "Override the config seed");
  run->add_option("--out", out_dir, "Output directory (default: ./probode-out/<experiment>)");

  CLI::App* presets_cmd = app.add_subcommand("presets", "List the preset experiment catalogue");
  std::string show_name;
  presets_cmd->add_option("--show", show_name, "Print the full config of one preset");

  CLI::App* validate_cmd = app.add_subcommand("validate", "Validate a config without running it");
  std::string validate_path;
  validate_cmd->add_option("config", validate_path, "Path to the experiment config (JSON)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }

  try {
    if (*presets_cmd) {
      if (!show_name.empty()) {
        std::fputs(probode::experiments::preset_config_text(show_name).c_str(), stdout);
        return 0;
      }
      for (const auto& info : probode::experiments::presets()) {
        std::printf("%-18s %s\n", info.name.c_str(), info.description.c_str());
      }
      return 0;
    }

    if (*validate_cmd) {
      std::ifstream in(validate_path);
      if (!in) {
        std::fprintf(stderr, "error: cannot open config file: %s\n", validate_path.c_str());
        return kExitConfigError;
      }
      std::stringstream buffer;
      buffer << in.rdbuf();
      probode::experiments::validate_config_text(buffer.str());
      std::printf("ok: %s\n", validate_path.c_str());
      return 0;
    }

    if (seed_opt->count() > 0) seed = seed_value;
    const std::filesystem::path out = out_dir.empty() ? "probode-out" : out_dir;
    auto result = probode::experiments::run_config_file(config_path, out, seed);
    std::printf("wrote %s\n", result.manifest_path.string().c_str());
    return 0;
  } catch (const probode::experiments::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumericalError;
  }
}
