#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sprl/curriculum.hpp"
#include "sprl/envs.hpp"

namespace sprl {

enum class EnvironmentKind { gate_precision, gate_global, quadratic };

std::string to_string(EnvironmentKind e);
EnvironmentKind environment_from_string(const std::string& s);

inline constexpr int kConfigVersion = 1;

/// A fully defaulted experiment. See docs/config.md for the file grammar.
struct ExperimentConfig {
  EnvironmentKind environment = EnvironmentKind::gate_global;
  LearnerConfig learner;
  std::vector<std::uint64_t> seeds;
  /// Gate reward and success parameters; ignored by the quadratic task.
  double kappa = 10.0;
  double nu = 1e-4;
  double tau = 0.05;
};

/// Defaults for one environment and algorithm before any file overrides.
ExperimentConfig default_config(EnvironmentKind environment, Algorithm algorithm);

/// Parses YAML (or JSON) text. Throws ConfigError with the offending field
/// and, where known, its 1-based line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError naming the first field that breaks an invariant.
void validate(const ExperimentConfig& config);

/// Canonical echo; parse_config(to_json(c).dump()) reproduces c.
nlohmann::json to_json(const ExperimentConfig& config);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

std::unique_ptr<Environment> make_environment(const ExperimentConfig& config);

}  // namespace sprl
