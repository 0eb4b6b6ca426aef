#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "solacc/config.hpp"

namespace solacc {

/// Process exit codes of the experiment runner.
enum ExitCode : int {
  kExitSuccess = 0,
  kExitValidation = 2,
  kExitRuntime = 3,
};

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct RunOptions {
  std::filesystem::path out;                  // output directory (created if missing)
  bool validate_only = false;
  std::optional<int> threads;                 // overrides `threads`
  std::optional<std::uint64_t> seed;          // overrides `seed`
};

/// Thrown by an experiment that ran but could not complete (lost tracking,
/// blow-up, ...). Outputs written so far are kept.
class ExperimentFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs one experiment into `out` and returns experiment-specific summary
/// values for the manifest. Throws ExperimentFailure or module exceptions on
/// runtime failure.
nlohmann::json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out,
                              std::ostream& log);

/// Full pipeline: parse, apply overrides, validate, run, write manifest.json.
/// Returns one of the ExitCode values; never throws.
int execute(const Config& config, const RunOptions& options, std::ostream& log);

}  // namespace solacc
