#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nxnflow/model.hpp"
#include "nxnflow/training.hpp"

namespace nxnflow {

/// Where training and evaluation data come from.
///
/// Generated kinds: eight_gaussians, two_moons, checkerboard (rank-2) and
/// textures (rank-4). File kinds: csv (x,y points), nxni (image dataset, used
/// at its own bit depth) and ppm (one image, requantized to `bits`).
struct DataConfig {
  std::string kind = "eight_gaussians";
  std::string path;
  std::size_t count = 10000;
  std::uint32_t bits = 5;
  std::uint32_t channels = 3;
  std::uint32_t height = 8;
  std::uint32_t width = 8;

  bool is_points() const;
  bool is_file() const;
};

struct SampleConfig {
  std::size_t count = 64;
  double temperature = 1.0;
  std::string out = "samples";
};

/// Every setting a command can read. Precedence, lowest first: built-in
/// defaults, config file, --set overrides, dedicated command-line flags.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  SampleConfig sample;
  std::string checkpoint = "checkpoint.nxnf";
  std::string metrics = "metrics.csv";
  std::string eval_out;
  std::string verify_suite = "all";
  std::string verify_out;

  /// Checks every key that does not depend on the dataset contents.
  void validate() const;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// `key = value` lines; blank lines and `#` comments are ignored. Throws
/// ConfigError naming the line on malformed input or a repeated key.
KeyValues parse_config_text(std::string_view text);

/// Applies one setting. Throws ConfigError naming the key when it is unknown
/// or its value does not parse.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
void apply_settings(RunConfig& config, const KeyValues& settings);

/// "key=value" as given on the command line.
std::pair<std::string, std::string> parse_override(std::string_view text);

/// Reads the file (when non-empty), then the overrides.
RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides = {});

/// All recognized keys, sorted.
std::vector<std::string> config_keys();

}  // namespace nxnflow
