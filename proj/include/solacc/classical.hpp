#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "solacc/randfield.hpp"
#include "solacc/soliton.hpp"

namespace solacc {

/// Point particle of the auxiliary classical dynamics ∂ã = ṽ, ∂ṽ = -2λ∇V̄(ã).
struct ClassicalState {
  Vec3 a{0.0, 0.0, 0.0};
  Vec3 v{0.0, 0.0, 0.0};
  double t = 0.0;
};

/// One classical RK4 step.
ClassicalState hamilton_step(const ClassicalState& s, const Potential& field, double lambda,
                             double dt);

/// H_cl = |ṽ|²/2 + 2λV̄(ã).
double classical_energy(const ClassicalState& s, const Potential& field, double lambda);

/// Integrates `steps` RK4 steps and keeps every `sample_every`-th state
/// (including the initial one).
std::vector<ClassicalState> integrate_classical(ClassicalState s, const Potential& field,
                                                double lambda, double dt, long steps,
                                                long sample_every = 1);

struct ScaledSample {
  double tbar = 0.0;
  Vec3 x{0.0, 0.0, 0.0};  // λ^{p_x} ã(t̄ / λ^{p_t})
  Vec3 v{0.0, 0.0, 0.0};  // ṽ(t̄ / λ^{p_t})
};

/// Samples (λ^{p_x} ã(t̄/λ^{p_t}), ṽ(t̄/λ^{p_t})) at the requested macroscopic
/// times, interpolating the trajectory with cubic Hermite polynomials.
/// Throws if the trajectory does not reach the last requested time.
std::vector<ScaledSample> rescale(const std::vector<ClassicalState>& trajectory, double lambda,
                                  const std::vector<double>& tbar, int dim, double time_exponent,
                                  double space_exponent);

/// Kinetic scaling: p_t = p_x = 2.
std::vector<ScaledSample> rescale_kinetic(const std::vector<ClassicalState>& trajectory,
                                          double lambda, const std::vector<double>& tbar, int dim);

struct EnsembleSpec {
  int count = 100;
  std::uint64_t base_seed = 1;
  double lambda = 0.1;
  Vec3 v0{1.0, 0.0, 0.0};
  double horizon = 2.0;     // macroscopic T
  double dt = 0.05;         // microscopic RK4 step
  int dim = 2;
  CorrelationModel corr;
  SynthesisMethod method = SynthesisMethod::Spectral;
  double points_per_length = 3.0;  // grid resolution for grid methods
  int features = 512;              // random-fourier feature count
  int samples = 41;                // output times t̄_i = i T / (samples-1)
  double time_exponent = 2.0;      // t_micro = t̄ / λ^{p_t}
  double space_exponent = 2.0;     // x = λ^{p_x} ã
  int threads = 1;

  void validate() const;
  /// Microscopic horizon T / λ^{p_t}.
  double micro_horizon() const;
  /// Grid used by grid-based synthesis: L_V = max(1.5 |v0| T_micro, 20 ℓ),
  /// power-of-two M with spacing at most ℓ / points_per_length.
  GridSpec field_grid() const;
};

struct EnsembleSummaryRow {
  double tbar = 0.0;
  double mean_speed_drift = 0.0;  // E[(|v| - |v0|)/|v0|]
  double dir_autocorr = 0.0;      // E[v̂(t̄)·v̂(0)]
  double msd = 0.0;               // E[|x(t̄) - x(0)|²]
  double se_speed_drift = 0.0;
  double se_dir_autocorr = 0.0;
  double se_msd = 0.0;
  double max_abs_speed_drift = 0.0;
};

struct EnsembleResult {
  std::vector<EnsembleSummaryRow> summary;
  std::vector<std::vector<ScaledSample>> members;  // successful members, seed order
  std::vector<double> sup_potential;               // sup |V̄| seen along each path
  std::vector<double> max_energy_drift;            // max |ΔH_cl| per member
  int failures = 0;
};

/// Builds the potential for ensemble member `seed` according to the spec.
using PotentialFactory = std::function<std::unique_ptr<Potential>(std::uint64_t seed)>;
PotentialFactory make_potential_factory(const EnsembleSpec& spec);

/// Independent members with seeds base+i, run on `spec.threads` threads and
/// reduced in seed order (bitwise deterministic for a fixed spec).
EnsembleResult run_ensemble(const EnsembleSpec& spec);
EnsembleResult run_ensemble(const EnsembleSpec& spec, const PotentialFactory& factory);

/// CSV: tbar, meanSpeedDrift, dirAutocorr, msd, seSpeedDrift, seDirAutocorr, seMsd.
void write_ensemble_csv(const std::filesystem::path& path, const std::vector<EnsembleSummaryRow>& rows);

/// Per-member trajectory CSV: tbar, x.., v...
void write_member_csv(const std::filesystem::path& path, const std::vector<ScaledSample>& samples, int dim);

struct ComparisonSpec {
  double h = 0.1;
  double lambda = 0.5;
  SolitonParams sigma0;        // initial soliton in PDE coordinates
  double horizon = 1.0;        // macroscopic T̄ (PDE time T̄/h)
  double dt = 5e-3;            // PDE time step
  int points = 0;              // PDE grid points per axis (0: spacing ≈ 0.1)
  int stride = 20;             // tracking cadence
  double cbar = 1.0;           // constant C̄ of the comparison window C̄ |log h| / λ
  double s = 2.0;              // nonlinearity exponent (closed-form profile for 1D cubic)
};

struct ComparisonResult {
  std::vector<double> tbar;
  std::vector<double> position_error;  // |ā_sol - ã|
  std::vector<double> velocity_error;  // |v̄_sol - ṽ|
  double sup_position_error = 0.0;
  double sup_velocity_error = 0.0;
  bool truncated = false;              // tracking lost before the horizon
  bool outside_window = false;         // horizon beyond C̄ |log h| / λ
  std::string note;
};

/// Drives the NLS solver (with tracking) and the classical particle with the
/// same realization V̄ and compares ā = h a, v̄ = v against ã, ṽ at t̄ = h t.
/// The PDE box is L_V / h so V_h is periodic on it.
ComparisonResult compare_soliton_classical(const FieldRealization& field, const ComparisonSpec& spec);

}  // namespace solacc
