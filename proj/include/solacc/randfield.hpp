#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "solacc/grid.hpp"

namespace solacc {

enum class CorrelationKind { GaussianBell, CompactKernel };

std::string to_string(CorrelationKind kind);
CorrelationKind correlation_kind_from_string(const std::string& name);

/// Statistical law of the potential through its two-point function
/// R(x) = 4 E[V(x) V(0)].
///
/// gaussian-bell:  R(r) = R0 exp(-r^2 / (2 ell^2)), smooth in every dimension.
/// compact-kernel: R is the normalized self-convolution of the C^2 bump
///                 K(y) = (1 - |y|^2/rho0^2)^3 on the ball |y| < rho0 in `dim`
///                 dimensions, so R vanishes beyond 2 rho0.
struct CorrelationModel {
  CorrelationKind kind = CorrelationKind::GaussianBell;
  double amplitude = 1.0;     // R0 = R(0)
  double length = 1.0;        // ell (gaussian-bell)
  double kernel_radius = 1.0; // rho0 (compact-kernel)
  int dim = 1;                // ambient dimension of the compact kernel

  static CorrelationModel gaussian_bell(double r0, double ell);
  static CorrelationModel compact_kernel(double r0, double rho0, int dim);

  void validate() const;
  /// Radius beyond which R (and all its derivatives) are negligible.
  double support_radius() const;
};

struct RadialDerivatives {
  double value = 0.0;   // R(r)
  double first = 0.0;   // R'(r)
  double second = 0.0;  // R''(r)
};

/// R, R', R'' of the radial profile at r >= 0.
RadialDerivatives analytic_R(const CorrelationModel& model, double r);

/// ∫_0^∞ R'(s)/s ds, the only correlation input of the momentum diffusion
/// matrix for radial R. Closed form for gaussian-bell, adaptive quadrature
/// otherwise.
double analytic_D_input(const CorrelationModel& model);

/// Integral of the compact bump squared, ∫ K^2 dy, in the model's dimension.
double compact_kernel_self_overlap(const CorrelationModel& model);

/// Value of the compact bump K at distance r from its centre.
double compact_kernel_value(double r, double rho0);

struct PotentialSample {
  double value = 0.0;
  Vec3 gradient{0.0, 0.0, 0.0};
  std::array<double, 9> hessian{};  // row-major 3x3; only dim x dim block used

  double hess(int i, int j) const { return hessian[3 * i + j]; }
};

/// A C^2 scalar potential that can be evaluated pointwise.
class Potential {
 public:
  virtual ~Potential() = default;
  virtual int dim() const = 0;
  virtual PotentialSample eval(const Vec3& x) const = 0;
  virtual Vec3 gradient(const Vec3& x) const { return eval(x).gradient; }
  virtual double value(const Vec3& x) const { return eval(x).value; }
};

enum class SynthesisMethod { Spectral, MovingAverage, RandomFourier };

std::string to_string(SynthesisMethod method);
SynthesisMethod synthesis_method_from_string(const std::string& name);

struct SupNorms {
  double value = 0.0;
  double gradient = 0.0;
  double hessian = 0.0;
};

/// One sampled potential on a periodic grid. Pointwise evaluation is the
/// trigonometric interpolant of the grid samples, so it is periodic with the
/// box length and C^∞. Immutable after construction.
class FieldRealization final : public Potential {
 public:
  FieldRealization(CorrelationModel model, GridSpec grid, std::uint64_t seed,
                   SynthesisMethod method, RealVec samples);
  /// Same as above with the Fourier coefficients c_k = FFT(samples)_k / M^N
  /// already known (avoids a transform).
  FieldRealization(CorrelationModel model, GridSpec grid, std::uint64_t seed,
                   SynthesisMethod method, RealVec samples, ComplexVec coefficients);

  int dim() const override { return grid_.dim; }
  PotentialSample eval(const Vec3& x) const override;
  double value(const Vec3& x) const override;

  const GridSpec& grid() const { return grid_; }
  const CorrelationModel& model() const { return model_; }
  std::uint64_t seed() const { return seed_; }
  SynthesisMethod method() const { return method_; }
  const RealVec& samples() const { return samples_; }
  const ComplexVec& coefficients() const { return coeffs_; }

  /// Sup norms of V, |∇V|, and the Frobenius norm of ∇²V over the grid.
  SupNorms sup_norms() const;
  nlohmann::json metadata() const;
  void dump(const std::filesystem::path& path) const;

 private:
  struct Mode {
    Vec3 k;
    Complex c;
  };
  void build_modes();

  CorrelationModel model_;
  GridSpec grid_;
  std::uint64_t seed_;
  SynthesisMethod method_;
  RealVec samples_;
  ComplexVec coeffs_;
  std::vector<Mode> modes_;
  mutable std::optional<SupNorms> sup_;
};

/// Gaussian field by circulant embedding of R/4 sampled on the grid; the k=0
/// mode is zeroed so each realization has exactly zero grid mean.
FieldRealization synthesize_spectral(const CorrelationModel& model, const GridSpec& grid,
                                     std::uint64_t seed);

/// Reusable spectral synthesizer for many seeds on one grid: the covariance
/// eigenvalues and FFT plans are computed once. Safe for concurrent calls.
class SpectralSynthesizer {
 public:
  SpectralSynthesizer(const CorrelationModel& model, const GridSpec& grid);
  FieldRealization operator()(std::uint64_t seed) const;

  /// Expected grid variance after the zero mode is removed: Σ_{k≠0} S_k / M^N.
  double expected_variance() const;
  const GridSpec& grid() const { return grid_; }

 private:
  CorrelationModel model_;
  GridSpec grid_;
  Fft fft_;
  RealVec amplitude_;  // sqrt(S_k) / M^N with S_0 dropped
  double variance_ = 0.0;
};

/// Moving average of i.i.d. grid white noise against the compact C^2 bump of
/// radius rho0, scaled so the continuum variance is R0/4. Values further than
/// 2 rho0 apart are independent.
FieldRealization synthesize_moving_average(const CorrelationModel& model, const GridSpec& grid,
                                           std::uint64_t seed);

/// Expected grid variance of synthesize_moving_average: amp^2 dx^N Σ K(x_j)^2.
double moving_average_variance(const CorrelationModel& model, const GridSpec& grid);

/// Periodic C^2 cubic B-spline interpolant of a grid field. Much cheaper to
/// evaluate than the trigonometric interpolant; value, gradient and Hessian
/// come from the same piecewise polynomial so forces are conservative.
class SplinePotential final : public Potential {
 public:
  explicit SplinePotential(const FieldRealization& field);

  int dim() const override { return grid_.dim; }
  PotentialSample eval(const Vec3& x) const override;
  Vec3 gradient(const Vec3& x) const override;

 private:
  GridSpec grid_;
  RealVec coef_;
};

/// Non-periodic field on R^N built from `features` random Fourier modes with
/// wavevectors drawn from the normalized spectral density (gaussian-bell only).
/// Conditionally Gaussian given the wavevectors; its covariance equals R/4
/// exactly for any feature count.
class FourierFeatureField final : public Potential {
 public:
  FourierFeatureField(const CorrelationModel& model, int dim, int features, std::uint64_t seed);

  int dim() const override { return dim_; }
  PotentialSample eval(const Vec3& x) const override;
  Vec3 gradient(const Vec3& x) const override;
  double value(const Vec3& x) const override;

  int features() const { return static_cast<int>(cos_amp_.size()); }

 private:
  int dim_;
  std::vector<Vec3> k_;
  RealVec cos_amp_;
  RealVec sin_amp_;
};

struct CorrelationEstimate {
  int lag_index = 0;      // lag in grid cells along axis 0
  double lag = 0.0;       // lag distance
  double mean = 0.0;      // estimate of R(lag)/4
  double stderr_ = 0.0;   // standard error across realizations
};

struct CorrelationReport {
  std::vector<CorrelationEstimate> estimates;
  int realizations = 0;
  bool too_few_realizations = false;  // fewer than 100 realizations
};

/// Mean of V(x + r e_1) V(x) over grid points x and realizations.
CorrelationReport empirical_correlation(std::span<const FieldRealization> ensemble,
                                        std::span<const int> lag_indices);

}  // namespace solacc
