#pragma once

// Flat JSON experiment configuration shared by every CLI command.

#include "driftguard/evaluation.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace driftguard {

inline constexpr int kConfigVersion = 1;

struct ExperimentConfig {
  int version = kConfigVersion;
  TrainingConfig training;
  ExperimentData data = SyntheticShiftSpec::default_benchmark();
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> ks{1, 2, 4, 8};
  /// Few-shot runs draw this many true-normal target ids per seed.
  int few_shot_count = 0;
  /// Optional path the synthetic spec was read from (kept for the record).
  std::string synthetic_spec_path;
};

/// Every key recognised in a config file.
const std::vector<std::string>& config_keys();

/// Throws ConfigError on unknown keys, wrong types or invalid values.
/// Relative paths resolve against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Canonical flat form; config_from_json(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& c);

/// Reads a config file (IoError when unreadable, ConfigError when malformed).
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies `key=value` overrides on top of a config's JSON form. Values
/// parse as JSON where possible, otherwise as a string.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides);

/// 16 hex digits of FNV-1a over the canonical dump.
std::string config_hash(const ExperimentConfig& c);
std::uint64_t fnv1a64(std::string_view bytes);

/// Comma-separated seeds ("1,2,3").
std::vector<std::uint64_t> parse_seed_list(const std::string& s);

}  // namespace driftguard
