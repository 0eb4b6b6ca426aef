#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "solacc/classical.hpp"
#include "solacc/randfield.hpp"

namespace solacc {

/// D_ij(k) = -(1/(2|k|)) ∫ ∂_i∂_j R(s k̂) ds, integrated adaptively along the
/// line from the analytic Hessian of the radial R and truncated at the
/// model's support radius. Symmetrized; throws if k = 0, if the eigenvalue
/// along k̂ exceeds 1e-12 or if an eigenvalue is below -1e-12.
Eigen::MatrixXd diffusion_matrix(const CorrelationModel& corr, const Eigen::VectorXd& k);

/// Transverse eigenvalue for radial R: D(k) = -(1/|k|) ∫_0^∞ R'(s)/s ds.
double isotropic_scalar(const CorrelationModel& corr, double k);

/// Limit objects of an isotropic correlation model in dimension `dim`.
class DiffusionLaw {
 public:
  /// Throws unless ∫_0^∞ R'(s)/s ds < 0 (positive transverse diffusion).
  DiffusionLaw(const CorrelationModel& corr, int dim);

  const CorrelationModel& correlation() const { return corr_; }
  int dim() const { return dim_; }

  double scalar(double k) const { return -input_ / k; }
  /// Closed-form D(k) (I - k̂k̂ᵀ) for a vector argument.
  Eigen::MatrixXd matrix(const Eigen::VectorXd& k) const;
  /// χ_j = c k̂_j with c = |k|³ / ((N-1) D(k)).
  double cell_amplitude(double k) const;
  /// d_ij = δ_ij |k|⁴ / (N (N-1) D(k)).
  Eigen::MatrixXd spatial_tensor(double k) const;
  /// Decay rate (N-1) D(k) / |k|² of E[v̂(t)·v̂(0)].
  double autocorrelation_rate(double k) const;
  /// Predicted mean-square-displacement slope 2 tr(d) = 2|k|⁴ / ((N-1) D).
  double msd_slope(double k) const;

 private:
  CorrelationModel corr_;
  int dim_;
  double input_;  // ∫_0^∞ R'(s)/s ds
};

struct ExponentialFit {
  double rate = 0.0;
  double stderr_ = 0.0;
  double ci_low = 0.0;   // 95% interval
  double ci_high = 0.0;
  int points = 0;
};

struct SphereDiffusionResult {
  std::vector<double> t;
  std::vector<double> autocorr;     // E[v̂(t)·v̂(0)]
  std::vector<double> autocorr_se;
  std::vector<double> msd;          // E|∫_0^t v ds|²
  std::vector<double> msd_se;
  double max_speed_error = 0.0;     // max | |v| - |v0| | / |v0| over all paths and steps
  ExponentialFit fit;
  int paths = 0;
};

struct SphereDiffusionOptions {
  double horizon = 1.0;
  double dt = 1e-3;
  int paths = 10000;
  int record_every = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  double fit_floor = 0.05;  // autocorrelation values below this are not fitted
};

/// Geodesic Euler–Maruyama for the generator ∇·(D∇) on the sphere |v| = |v0|:
/// Gaussian tangent increment with covariance 2 D dt (I - v̂v̂ᵀ), then exact
/// re-projection onto the sphere. Also integrates the position ∫ v dt.
/// Paths are processed in fixed blocks and reduced in seed order.
SphereDiffusionResult simulate_sphere_diffusion(double D, const Eigen::VectorXd& v0,
                                                const SphereDiffusionOptions& options);
SphereDiffusionResult simulate_sphere_diffusion(const DiffusionLaw& law, const Eigen::VectorXd& v0,
                                                const SphereDiffusionOptions& options);

/// Weighted least-squares fit of log y = -r t through the origin, on the
/// samples with y above `floor`; weights from the standard errors.
ExponentialFit fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& y,
                                    const std::vector<double>& se, double floor);

/// Matrix field v ↦ D(v), tangent to the sphere through v.
using DiffusionField = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct CellSolution {
  double k = 0.0;
  int dim = 0;
  double amplitude = 0.0;         // closed-form c (NaN for the numerical path)
  Eigen::MatrixXd coefficients;   // χ_l = Σ_m C_lm v̂_m
  Eigen::MatrixXd d;              // d_ij = ⟨v_i χ_j⟩ over the sphere
  double residual = 0.0;          // max |∇·(D∇χ_l) + |k| v̂_l| / |k| on the sphere
};

/// Residual of χ_l = Σ_m C_lm v̂_m in the cell equation, evaluated with
/// fourth-order (5-point) central differences of the flux D∇χ at nodes of
/// the sphere of radius k.
double cell_residual(const DiffusionField& D, const Eigen::MatrixXd& coefficients, double k, int dim,
                     double step = 1e-2);

/// Galerkin projection of the cell problem onto degree-1 harmonics, for an
/// arbitrary tangent diffusion field; the residual reports what the
/// projection misses.
CellSolution cell_problem_numeric(const DiffusionField& D, double k, int dim);

/// Closed form for an isotropic law (N ≥ 3) with the finite-difference
/// residual of the closed-form χ attached.
CellSolution cell_problem(const DiffusionLaw& law, double k);

/// Quadrature nodes/weights on the unit sphere (weights sum to 1): a
/// uniform circle in 2D, 20-point Gauss–Legendre in z × uniform azimuth in 3D.
struct SphereRule {
  std::vector<Eigen::VectorXd> nodes;
  std::vector<double> weights;
};
SphereRule sphere_rule(int dim, int azimuth = 24);

/// Heat kernel with covariance 2 d t + initial covariance, evaluated at x.
double heat_profile(const Eigen::MatrixXd& d, double t, const Eigen::VectorXd& x,
                    double initial_variance = 0.0);

struct ChiSquareResult {
  double statistic = 0.0;
  int bins = 0;
  int dof = 0;
  double p_value = 0.0;
  bool pass = false;  // p ≥ level
};

/// Pearson test of positions against heat_profile: the Mahalanobis radius
/// |(2dt + s0 I)^{-1/2} x|² is χ²_N distributed under the heat profile, and is
/// binned into equiprobable classes.
ChiSquareResult chi_square_position_test(const std::vector<Eigen::VectorXd>& positions,
                                         const Eigen::MatrixXd& d, double t, int bins = 20,
                                         double level = 0.01, double initial_variance = 0.0);

struct MsdTestResult {
  std::vector<double> t;
  std::vector<double> msd;
  std::vector<double> msd_se;
  double slope = 0.0;
  double slope_se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double predicted = 0.0;
  double relative_error = 0.0;
  bool too_few_members = false;  // CI half-width above the target fraction of the slope
};

/// Least-squares MSD slope (with intercept) over t ∈ [t0_fraction T, T].
/// The slope is a linear functional of each member's |x|² curve, so its
/// standard error comes from the spread of per-member slopes.
MsdTestResult spatial_msd_test(const std::vector<std::vector<ScaledSample>>& members, int dim,
                               double predicted_slope, double t0_fraction = 0.2,
                               double target_ci = 0.1);

void write_msd_csv(const std::filesystem::path& path, const MsdTestResult& result);

/// {k, Dmatrix, Dscalar, cellC, dTensor, fitRates, CIs}
nlohmann::json diffusion_report(const DiffusionLaw& law, double k, const std::vector<double>& fit_rates,
                                const std::vector<std::array<double, 2>>& cis);

}  // namespace solacc
