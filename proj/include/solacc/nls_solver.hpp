#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "solacc/grid.hpp"
#include "solacc/randfield.hpp"

namespace solacc {

/// Complex PDE state ψ on a periodic grid at time t.
struct WaveField {
  GridSpec grid;
  ComplexVec psi;
  double t = 0.0;
};

struct SolverConfig {
  double dt = 1e-3;
  double lambda = 0.0;  // coupling in [0, 1]
  double h = 1.0;       // potential scale in (0, 1]
  double s = 2.0;       // nonlinearity exponent
  bool nonlinear = true;  // false drops the |ψ|^s ψ term (linear tests)
  bool dealias = false;   // 2/3-rule filter after every kinetic substep

  void validate() const;
};

/// V_h(x) = V̄(h x) and its gradient sampled on the PDE grid.
struct SampledPotential {
  GridSpec grid;
  RealVec value;
  std::array<RealVec, 3> gradient;

  static SampledPotential zero(const GridSpec& grid);
  static SampledPotential constant(const GridSpec& grid, double c);
  /// Samples an arbitrary potential function of the PDE coordinate x.
  static SampledPotential from_function(const GridSpec& grid,
                                        const std::function<PotentialSample(const Vec3&)>& f);
  /// Samples V̄(h x) from a field realization. Requires L_ψ h ≤ L_V; when the
  /// boxes match exactly the samples come from exact Fourier resampling,
  /// otherwise from pointwise trigonometric evaluation.
  static SampledPotential from_field(const FieldRealization& field, const GridSpec& grid, double h);
};

class SolverBlowUp : public std::runtime_error {
 public:
  SolverBlowUp(const std::string& what, long step) : std::runtime_error(what), step(step) {}
  long step;
};

/// Diagnostics recorded at one time.
struct DiagnosticSample {
  double t = 0.0;
  double charge = 0.0;
  double hamiltonian = 0.0;
  Vec3 momentum{0.0, 0.0, 0.0};    // ⟨iψ, ∇ψ⟩
  Vec3 force{0.0, 0.0, 0.0};       // -λ ∫ ∇V_h |ψ|²
  double potential_energy = 0.0;   // ½ ∫ V_h |ψ|²
  double potential_rate = 0.0;     // ⟨∇V_h iψ, ∇ψ⟩
  double sup_abs = 0.0;
};

using DiagnosticTrace = std::vector<DiagnosticSample>;

/// Strang-split spectral integrator for i∂_tψ = (-Δ + λV_h)ψ - |ψ|^s ψ.
class NlsSolver {
 public:
  NlsSolver(const GridSpec& grid, SolverConfig cfg, SampledPotential potential);

  const GridSpec& grid() const { return grid_; }
  const SolverConfig& config() const { return cfg_; }
  const Spectral& spectral() const { return spectral_; }
  const SampledPotential& potential() const { return potential_; }

  /// One Strang step: half potential/nonlinear phase, exact kinetic step,
  /// half phase. Throws SolverBlowUp on non-finite values.
  void step(WaveField& w) const;
  /// Runs `steps` steps; `observer(w, k)` is called after step k (and with
  /// k = 0 before the first step).
  void run(WaveField& w, long steps, const std::function<void(const WaveField&, long)>& observer = {}) const;

  double charge(const ComplexVec& psi) const;
  double hamiltonian(const ComplexVec& psi) const;
  Vec3 momentum(const ComplexVec& psi) const;
  DiagnosticSample diagnostics(const WaveField& w) const;

 private:
  void phase_substep(ComplexVec& psi, double tau) const;

  GridSpec grid_;
  SolverConfig cfg_;
  SampledPotential potential_;
  Spectral spectral_;
  ComplexVec kinetic_;
  RealVec dealias_mask_;
  mutable long steps_taken_ = 0;
};

/// max_t |d/dt⟨iψ,∇ψ⟩ + λ∫∇V_h|ψ|²| with centred differences on the trace
/// (uniform sampling assumed; endpoints skipped).
double ehrenfest_residual(const DiagnosticTrace& trace, int dim);
/// max_t |d/dt ½∫V_h|ψ|² - ⟨∇V_h iψ, ∇ψ⟩|.
double potential_rate_residual(const DiagnosticTrace& trace);

/// CSV with columns t, charge, hamiltonian, px[, py[, pz]], supAbsPsi.
void write_trace_csv(const std::filesystem::path& path, const DiagnosticTrace& trace, int dim);

/// Checkpoint in the shared binary envelope: interleaved Re/Im payload, the
/// reserved header slot holds t.
void write_checkpoint(const std::filesystem::path& path, const WaveField& w, std::uint64_t seed);
WaveField read_checkpoint(const std::filesystem::path& path);

}  // namespace solacc
