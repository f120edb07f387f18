#pragma once

// Config-driven experiments: validation of JSON configs, dispatch to the
// library, deterministic artifacts and a hashed manifest.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace polymix::cli {

enum class Kind { Tail, Sweep, Scan, Confirm, Burnin, Stabilize, Correlate, Couplab };

/// Subcommand names plus the long aliases (grid-scan, burn-in, stabilization,
/// correlation).
std::optional<Kind> parse_kind(std::string_view name);
const char* kind_name(Kind k);

struct ExperimentConfig {
  Kind kind = Kind::Tail;
  std::uint64_t seed = 1;
  std::optional<unsigned> workers;
  std::string output_dir = "polymix-out";
  /// Validated config with every default filled in. Excludes `workers` and
  /// `output_dir`, which never influence results.
  nlohmann::json normalized;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct ValidationResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> errors;  // one entry per violation
  bool ok() const { return config.has_value(); }
};

/// Structural and range validation; unknown keys are rejected. When
/// `expected` is given, a `kind` in the config must agree with it (and may be
/// omitted).
ValidationResult validate_config(std::string_view text, std::optional<Kind> expected = std::nullopt);

struct ArtifactFile {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uint64_t bytes = 0;
};

struct RunResult {
  std::string output_dir;
  std::vector<ArtifactFile> files;  // excludes manifest.json itself
  std::uint64_t total_trajectories = 0;
  nlohmann::json summary;           // the kind-specific result JSON
};

/// Run and write artifacts into cfg.output_dir. Throws ValidationError for
/// config-level problems found late (e.g. an ensemble file for another
/// model); other failures throw std::runtime_error. Files written by a
/// failed run are removed.
RunResult run_experiment(const ExperimentConfig& cfg, unsigned workers);

std::string sha256_hex(std::string_view data);

/// Command-line entry point; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace polymix::cli
