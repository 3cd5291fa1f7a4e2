#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flood/trainer.hpp"

namespace flood {

/// Training run described by a flat `key = value` file. `manifest` and
/// `out_dir` are required; every other key falls back to the TrainConfig
/// default. Relative paths resolve against the config file's directory.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  TrainConfig train;
};

/// Keys accepted by parse_run_config, in documentation order.
const std::vector<std::string>& run_config_keys();

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Parses "lo,hi" into two floats.
std::pair<float, float> parse_range(std::string_view text, std::string_view key);

}  // namespace flood
