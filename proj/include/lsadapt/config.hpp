#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lsadapt/experiment.hpp"
#include "lsadapt/simulation.hpp"

namespace lsadapt {

/// Raised for malformed or invalid configuration; exit code 2 in the CLI.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ordered `key = value` pairs from a text file. '#' starts a comment.
/// Duplicate keys and lines without '=' are errors.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

/// Applies keys onto the defaults; unknown keys raise ConfigError naming them.
ExperimentConfig parse_experiment_config(std::string_view text);

/// Canonical text of every key, in fixed order, with round-trip number format.
std::string serialize_experiment_config(const ExperimentConfig& cfg);

/// FNV-1a hex digest of the canonical serialization.
std::string config_digest(const ExperimentConfig& cfg);

/// Cohort generation spec: optional `preset` first, then any overrides.
CohortSpec parse_cohort_spec(std::string_view text);
std::string serialize_cohort_spec(const CohortSpec& spec);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

}  // namespace lsadapt
