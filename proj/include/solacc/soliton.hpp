#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

#include "solacc/grid.hpp"

namespace solacc {

/// Modulation point σ = (a, v, γ, μ) of a soliton η_σ.
struct SolitonParams {
  Vec3 a{0.0, 0.0, 0.0};
  Vec3 v{0.0, 0.0, 0.0};
  double gamma = 0.0;
  double mu = 1.0;
};

/// Reduces a phase to [0, 2π).
double reduce_phase(double gamma);

/// Ground state η_μ > 0 of (-Δ + μ)η = η^{s+1} sampled on a grid, centred at
/// the origin (grid index M/2 on every axis).
struct Profile {
  double mu = 1.0;
  double s = 2.0;
  int dim = 1;
  GridSpec grid;
  RealVec eta;
  double mass = 0.0;        // m(μ) = ½∫η²
  double mass_prime = 0.0;  // m'(μ)
  double residual = 0.0;    // ‖(-Δ+μ)η - η^{s+1}‖ / ‖η‖ on the grid
  int iterations = 0;
};

/// Closed-form 1D cubic profile √(2μ) sech(√μ x) on `grid`.
Profile profile_1d_cubic(double mu, const GridSpec& grid);

/// Thrown when the profile fixed-point iteration stalls.
class ProfileNotConverged : public std::runtime_error {
 public:
  ProfileNotConverged(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual(last_residual) {}
  double last_residual;
};

/// Petviashvili iteration for the ground state with nonlinearity |u|^s u.
/// Requires 0 < s < 4/N. The mass derivative is a centred difference over
/// μ(1 ± 1e-3).
Profile profile_petviashvili(double mu, double s, const GridSpec& grid, int max_iter = 5000,
                             double tol = 1e-12);

/// ‖(-Δ+μ)η - |η|^s η‖₂ / ‖η‖₂ for grid samples η.
double profile_residual(const RealVec& eta, double mu, double s, const Spectral& spectral);

/// Writes `<stem>.json` (mu, s, N, M, L, residual, mass, massPrime) and
/// `<stem>.bin` with the samples along the positive first axis from the centre.
void write_profile_cache(const std::filesystem::path& stem, const Profile& profile);

/// Source of ground states η_μ for any μ near a reference value, on a fixed grid.
class ProfileFamily {
 public:
  virtual ~ProfileFamily() = default;

  virtual const GridSpec& grid() const = 0;
  virtual double nonlinearity() const = 0;

  /// η_μ(x - a), periodized on the grid.
  virtual RealVec profile_at(double mu, const Vec3& a) const = 0;
  /// ∂_μ η_μ(x - a) by centred difference with relative step 1e-3.
  RealVec dmu_profile_at(double mu, const Vec3& a) const;

  virtual double mass(double mu) const = 0;
  virtual double mass_prime(double mu) const = 0;
  /// Inverse of m(μ) using the exact power law m(μ) ∝ μ^{2/s - N/2}.
  double mu_from_mass(double m) const;

  // Relative step for central differences in mu; O(step^2) truncation.
  static constexpr double kMuStep = 1e-4;
};

/// Exact sech family for the 1D cubic equation.
class CubicProfile1D final : public ProfileFamily {
 public:
  explicit CubicProfile1D(const GridSpec& grid);

  const GridSpec& grid() const override { return grid_; }
  double nonlinearity() const override { return 2.0; }
  RealVec profile_at(double mu, const Vec3& a) const override;
  double mass(double mu) const override;
  double mass_prime(double mu) const override;

 private:
  GridSpec grid_;
};

/// Numerically computed profiles. Each anchor μ₀ caches Petviashvili solutions
/// at μ₀(1-δ), μ₀, μ₀(1+δ); requests within 0.5% of an anchor use quadratic
/// Lagrange interpolation in μ, others create a new anchor. Translations are
/// spectral. Thread safe.
class GridProfile final : public ProfileFamily {
 public:
  GridProfile(double s, const GridSpec& grid, double mu_ref);

  const GridSpec& grid() const override { return grid_; }
  double nonlinearity() const override { return s_; }
  RealVec profile_at(double mu, const Vec3& a) const override;
  double mass(double mu) const override;
  double mass_prime(double mu) const override;

  /// The reference-μ solution, including its residual.
  const Profile& reference() const { return reference_; }

 private:
  RealVec centred(double mu) const;

  double s_;
  GridSpec grid_;
  Spectral spectral_;
  Profile reference_;
  mutable std::mutex mutex_;
  mutable std::map<double, std::array<RealVec, 3>> anchors_;
};

struct BuiltSoliton {
  ComplexVec field;
  bool edge_warning = false;  // box half-width below 6/√μ: tails wrap around
};

/// η_σ(x) = e^{i(½ v·(x-a) + γ)} η_μ(x - a), with x - a taken as the
/// minimal periodic image.
BuiltSoliton build_soliton(const SolitonParams& sigma, const ProfileFamily& family);

/// The 2N+2 tangent vectors e_α η_σ: -∂_j η_σ, i x_j η_σ, i η_σ, ∂_μ η_σ.
/// x_j is the coordinate a_j + (x_j - a_j)_wrapped, consistent with the
/// analytic symplectic matrix.
std::vector<ComplexVec> tangent_vectors(const SolitonParams& sigma, const ProfileFamily& family,
                                        const Spectral& spectral);

/// Analytic (2N+2)x(2N+2) matrix ⟨e_α η_σ, i e_β η_σ⟩.
Eigen::MatrixXd symplectic_matrix(const SolitonParams& sigma, int dim, double m, double m_prime);

/// Numerical Gram matrix ⟨e_α η_σ, i e_β η_σ⟩ from tangent vectors.
Eigen::MatrixXd symplectic_gram(const std::vector<ComplexVec>& tangents, const GridSpec& grid);

/// ℒ_μ w = (-Δ + μ) w - f'(η)w with f'(η)w = (s+1)η^s Re w + i η^s Im w.
ComplexVec apply_hessian(const ComplexVec& w, const RealVec& eta, double mu, double s,
                         const Spectral& spectral);

struct ZeroModeReport {
  double translation = 0.0;         // ‖ℒ∇η‖/‖∇η‖ (max over axes)
  double gauge = 0.0;               // ‖ℒ(iη)‖/‖η‖
  double boost_ratio = 0.0;         // ‖ℒ(i x η)‖/‖∇η‖
  double boost_parallel_residual = 0.0;  // relative residual of ℒ(i x η) ∝ i∂η fit
  double boost_factor = 0.0;        // fitted constant c in ℒ(i x η) ≈ c i∂η
  double scaling_ratio = 0.0;       // ‖ℒ ∂_μη‖/‖η‖
};

ZeroModeReport zero_mode_residuals(const ProfileFamily& family, double mu);

}  // namespace solacc
