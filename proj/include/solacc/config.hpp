#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "solacc/classical.hpp"
#include "solacc/diffusion.hpp"
#include "solacc/nls_solver.hpp"
#include "solacc/randfield.hpp"
#include "solacc/soliton.hpp"
#include "solacc/tracker.hpp"

namespace solacc {

enum class ExperimentKind {
  SynthField,
  Profile,
  EvolveTrack,
  Compare,
  Ensemble,
  DiffusionTheory,
  SphereSim,
  SpatialMsd,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text with dotted keys. `#` starts a comment; vectors
/// are comma separated. Every lookup records the value it resolved to
/// (including defaults), so the resolved map reproduces a run exactly.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec(const std::string& key, const Vec3& fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::map<std::string, std::string>& resolved() const { return resolved_; }
  /// Keys present in the text that no lookup ever asked for.
  std::vector<std::string> unused_keys() const;
  /// Serializes the resolved map back to the text format.
  std::string dump_resolved() const;

 private:
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, std::string> resolved_;
};

/// Typed view of a configuration. Only the sections the experiment kind
/// needs are read, so unused keys can be reported as mistakes.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::SynthField;
  std::uint64_t seed = 1;
  int threads = 1;
  int dim = 1;

  // random potential V̄
  CorrelationModel corr;
  SynthesisMethod method = SynthesisMethod::Spectral;
  GridSpec field_grid;
  int realizations = 1;
  int features = 512;

  // soliton and PDE
  SolitonParams sigma;
  double s = 2.0;
  GridSpec pde_grid;
  SolverConfig solver;
  double pde_horizon = 10.0;
  TrackOptions tracking;

  ComparisonSpec compare;

  Vec3 v0{1.0, 0.0, 0.0};
  EnsembleSpec ensemble;
  double beta = 0.0;
  double schedule_h = 0.0;  // optional h for the schedule check (0: not given)

  SphereDiffusionOptions sphere;
  double t0_fraction = 0.2;
  double target_ci = 0.1;
  int bins = 20;
  double level = 0.01;

  Config raw;

  /// Throws ConfigError on malformed or missing values.
  static ExperimentConfig from(const Config& config);
};

struct Check {
  enum class Verdict { Pass, Fail, Warn };
  std::string name;
  Verdict verdict = Verdict::Pass;
  std::string detail;
};

struct ValidationReport {
  std::vector<Check> checks;

  bool ok() const;
  /// Detail of the first failed check (empty when none failed).
  std::string first_failure() const;
  std::string text() const;
  nlohmann::json json() const;
};

/// Checks the assumptions that are verifiable from the configuration and the
/// preconditions of the modules the experiment touches. Never throws for a
/// failed check; failures are carried in the report.
ValidationReport validate(const ExperimentConfig& config);

}  // namespace solacc
