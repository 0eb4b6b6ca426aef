#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "solacc/nls_solver.hpp"
#include "solacc/randfield.hpp"
#include "solacc/soliton.hpp"

namespace solacc {

/// ψ = η_σ + w with w skew-orthogonal to the tangent space at η_σ.
struct Decomposition {
  SolitonParams sigma;
  ComplexVec w;
  std::vector<double> residuals;  // G_α = ⟨ψ - η_σ, i e_α η_σ⟩
  double wH1 = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Raised when the state has left the neighbourhood of the soliton manifold
/// where the decomposition exists.
class TrackingLost : public std::runtime_error {
 public:
  TrackingLost(const std::string& what, std::vector<double> residuals, double wH1)
      : std::runtime_error(what), residuals(std::move(residuals)), wH1(wH1) {}
  std::vector<double> residuals;
  double wH1;
};

/// Moment-based starting point: circular-mean centre, momentum over charge,
/// μ from inverting m(μ), phase at the nearest grid point minus the boost.
SolitonParams moment_initializer(const ComplexVec& psi, const ProfileFamily& family,
                                 const Spectral& spectral);

struct ProjectOptions {
  int max_iter = 50;
  double tolerance = 1e-9;  // |G_α| ≤ tol ‖ψ‖_{H¹} ‖e_α η_σ‖_{H¹}
  double delta = 0.5;       // operational U_δ radius: ‖w‖_{H¹} ≤ δ ‖ψ‖_{H¹}
};

/// Newton iteration on the 2N+2 skew-orthogonality conditions with a
/// forward-difference Jacobian. Throws TrackingLost on failure.
Decomposition project(const ComplexVec& psi, const SolitonParams& guess, const ProfileFamily& family,
                      const Spectral& spectral, const ProjectOptions& options = {});

/// ‖w‖_{H¹} with spectral weights (1 + |k|²).
double h1_norm(const ComplexVec& w, const Spectral& spectral);

struct CCoefficients {
  double t = 0.0;
  std::vector<double> c;  // c_1 .. c_{2N+2}
  double cmax = 0.0;
};

struct CSeries {
  std::vector<CCoefficients> values;  // one per interior sample
  bool unwrap_ambiguous = false;      // some phase step was close to π
};

/// c-coefficients from a uniformly sampled σ(t) by centred differences.
/// `potential` is V̄ (may be null when λ = 0); V_h(a) = V̄(h a) and
/// ∇V_h(a) = h ∇V̄(h a). `period` > 0 unwraps positions on a periodic box.
CSeries c_coefficients(const std::vector<double>& t, const std::vector<SolitonParams>& sigma,
                       int dim, double lambda, double h, const Potential* potential,
                       double period = 0.0);

/// Continuous phase from values reduced mod 2π (nearest-branch continuation).
std::vector<double> unwrap_phase(const std::vector<double>& gamma, bool* ambiguous = nullptr);

/// 𝒞_μ = ℰ_μ(u) - ℰ_μ(η_μ) with u = T⁻¹_{avγ} ψ and
/// ℰ_μ(u) = ½∫(|∇u|² + μ|u|²) - ∫|u|^{s+2}/(s+2).
double lyapunov(const ComplexVec& psi, const SolitonParams& sigma, const ProfileFamily& family,
                const Spectral& spectral);

/// ℰ_μ(u) evaluated directly on a grid field.
double action_energy(const ComplexVec& u, double mu, double s, const Spectral& spectral);

struct TrackRecord {
  double t = 0.0;
  SolitonParams sigma;
  double wH1 = 0.0;
  double cmax = 0.0;  // NaN at the end points
  double lyapunov = 0.0;
  int newton_iters = 0;
  bool converged = false;
};

struct TrackResult {
  std::vector<TrackRecord> records;
  DiagnosticTrace trace;
  bool lost = false;
  double lost_time = 0.0;
  std::string lost_reason;
  bool unwrap_ambiguous = false;
};

struct TrackOptions {
  long steps = 0;
  int stride = 10;            // tracking cadence in PDE steps
  bool diagnostics = false;   // record solver diagnostics every step
  ProjectOptions project;
};

/// Evolves `w` with `solver` and projects onto the soliton manifold every
/// `stride` steps, starting from `guess`. Stops early (flagged) on TrackingLost.
TrackResult evolve_and_track(const NlsSolver& solver, WaveField& w, const ProfileFamily& family,
                             const SolitonParams& guess, const Potential* potential,
                             const TrackOptions& options);

/// Tracking CSV: t, a.., v.., gamma, mu, wH1, cmax, lyapunov, newtonIters, converged.
void write_tracking_csv(const std::filesystem::path& path, const std::vector<TrackRecord>& records,
                        int dim);

}  // namespace solacc
