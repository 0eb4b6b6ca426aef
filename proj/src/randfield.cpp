#include "solacc/randfield.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "solacc/io.hpp"
#include "solacc/seed.hpp"

namespace solacc {

namespace {

using boost::math::quadrature::gauss;

// Bump K(y) = k(|y|^2) with k(u) = (1 - u/rho0^2)^3 and its u-derivatives.
struct BumpProfile {
  double inv_r2;
  double k(double u) const {
    const double t = 1.0 - u * inv_r2;
    return t > 0.0 ? t * t * t : 0.0;
  }
  double dk(double u) const {
    const double t = 1.0 - u * inv_r2;
    return t > 0.0 ? -3.0 * inv_r2 * t * t : 0.0;
  }
  double d2k(double u) const {
    const double t = 1.0 - u * inv_r2;
    return t > 0.0 ? 6.0 * inv_r2 * inv_r2 * t : 0.0;
  }
};

// Which r-derivative of the autocorrelation A(r) = ∫ K(y) K(y + r e1) dy.
// Differentiation passes under the integral because K and its first two
// derivatives vanish on the boundary of its support.
enum class Order { Zero, One, Two };

// Integrand K(y) ∂^n_1 K(y + r e1) written with y = (y1, ρ), q = |ρ|^2.
double overlap_integrand(const BumpProfile& b, Order order, double y1, double q, double r) {
  const double z1 = y1 + r;
  const double u0 = y1 * y1 + q;
  const double u1 = z1 * z1 + q;
  const double left = b.k(u0);
  switch (order) {
    case Order::Zero:
      return left * b.k(u1);
    case Order::One:
      return left * 2.0 * z1 * b.dk(u1);
    case Order::Two:
      return left * (4.0 * z1 * z1 * b.d2k(u1) + 2.0 * b.dk(u1));
  }
  return 0.0;
}

double bump_overlap(double rho0, int dim, Order order, double r) {
  if (r >= 2.0 * rho0) return 0.0;
  const BumpProfile b{1.0 / (rho0 * rho0)};
  const double lo = -rho0;
  const double hi = rho0 - r;
  const double mid = -0.5 * r;

  // Squared radius of the transverse slice of the lens at height y1.
  auto slice_r2 = [&](double y1) {
    const double z1 = y1 + r;
    return std::max(0.0, rho0 * rho0 - std::max(y1 * y1, z1 * z1));
  };

  if (dim == 1) {
    // Polynomial integrand of degree 12 on each piece: 20-point rule is exact.
    auto f = [&](double y1) { return overlap_integrand(b, order, y1, 0.0, r); };
    return gauss<double, 20>::integrate(f, lo, mid) + gauss<double, 20>::integrate(f, mid, hi);
  }

  auto slice = [&](double y1) {
    const double rb = std::sqrt(slice_r2(y1));
    if (rb <= 0.0) return 0.0;
    if (dim == 2) {
      auto g = [&](double p) { return overlap_integrand(b, order, y1, p * p, r); };
      return 2.0 * gauss<double, 20>::integrate(g, 0.0, rb);
    }
    auto g = [&](double p) { return p * overlap_integrand(b, order, y1, p * p, r); };
    return 2.0 * std::numbers::pi * gauss<double, 20>::integrate(g, 0.0, rb);
  };

  if (dim == 3) {
    // The slice integral is a polynomial in y1 on each piece.
    return gauss<double, 30>::integrate(slice, lo, mid) +
           gauss<double, 30>::integrate(slice, mid, hi);
  }
  // dim 2: the slice integral carries half-integer powers of the chord; the
  // double-exponential rule absorbs the endpoint singularities.
  boost::math::quadrature::tanh_sinh<double> ts;
  double total = 0.0;
  if (mid > lo) total += ts.integrate(slice, lo, mid, 1e-14);
  if (hi > mid) total += ts.integrate(slice, mid, hi, 1e-14);
  return total;
}

double compact_zero_overlap(double rho0, int dim) {
  // ∫ (1 - |y|^2/rho0^2)^6 dy over the ball = rho0^N pi^{N/2} Γ(7) / Γ(N/2 + 7).
  const double n = dim;
  return std::pow(rho0, n) * std::pow(std::numbers::pi, 0.5 * n) * std::tgamma(7.0) /
         std::tgamma(0.5 * n + 7.0);
}

// Minimal-image distance of a flat grid index to the origin corner, and the
// integer squared index distance used as a cache key.
struct MinImage {
  double r;
  long key;
};

MinImage min_image(const GridSpec& grid, std::size_t flat) {
  auto idx = grid.unravel(flat);
  long key = 0;
  for (int d = 0; d < grid.dim; ++d) {
    long i = idx[d];
    if (i > grid.points / 2) i -= grid.points;
    key += i * i;
  }
  return {std::sqrt(static_cast<double>(key)) * grid.spacing(), key};
}

RealVec radial_samples(const GridSpec& grid, const std::function<double(double)>& f) {
  std::unordered_map<long, double> cache;
  RealVec out(grid.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    auto mi = min_image(grid, j);
    auto it = cache.find(mi.key);
    if (it == cache.end()) it = cache.emplace(mi.key, f(mi.r)).first;
    out[j] = it->second;
  }
  return out;
}

ComplexVec white_noise_spectrum(const GridSpec& grid, const Fft& fft, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexVec xi(grid.size());
  for (auto& z : xi) z = normal(rng);
  fft.forward(xi);
  return xi;
}

// Turns c (Fourier coefficients, c = FFT(V)/n) into real grid samples.
RealVec samples_from_coefficients(const ComplexVec& c, const Fft& fft) {
  ComplexVec w = c;
  fft.backward(w);
  const double n = static_cast<double>(c.size());
  RealVec out(c.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = w[j].real() * n;
  return out;
}

}  // namespace

std::string to_string(CorrelationKind kind) {
  return kind == CorrelationKind::GaussianBell ? "gaussian-bell" : "compact-kernel";
}

CorrelationKind correlation_kind_from_string(const std::string& name) {
  if (name == "gaussian-bell") return CorrelationKind::GaussianBell;
  if (name == "compact-kernel") return CorrelationKind::CompactKernel;
  throw std::invalid_argument("unknown correlation kind '" + name + "'");
}

std::string to_string(SynthesisMethod method) {
  switch (method) {
    case SynthesisMethod::Spectral: return "spectral";
    case SynthesisMethod::MovingAverage: return "moving-average";
    case SynthesisMethod::RandomFourier: return "random-fourier";
  }
  return "unknown";
}

SynthesisMethod synthesis_method_from_string(const std::string& name) {
  if (name == "spectral") return SynthesisMethod::Spectral;
  if (name == "moving-average") return SynthesisMethod::MovingAverage;
  if (name == "random-fourier") return SynthesisMethod::RandomFourier;
  throw std::invalid_argument("unknown synthesis method '" + name + "'");
}

CorrelationModel CorrelationModel::gaussian_bell(double r0, double ell) {
  CorrelationModel m;
  m.kind = CorrelationKind::GaussianBell;
  m.amplitude = r0;
  m.length = ell;
  m.validate();
  return m;
}

CorrelationModel CorrelationModel::compact_kernel(double r0, double rho0, int dim) {
  CorrelationModel m;
  m.kind = CorrelationKind::CompactKernel;
  m.amplitude = r0;
  m.kernel_radius = rho0;
  m.length = rho0;
  m.dim = dim;
  m.validate();
  return m;
}

void CorrelationModel::validate() const {
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude))
    throw std::invalid_argument("correlation amplitude R0 must be finite and non-negative");
  if (kind == CorrelationKind::GaussianBell) {
    if (!(length > 0.0)) throw std::invalid_argument("correlation length must be positive");
  } else {
    if (!(kernel_radius > 0.0)) throw std::invalid_argument("kernel radius rho0 must be positive");
    if (dim < 1 || dim > 3) throw std::invalid_argument("compact kernel dimension must be 1..3");
  }
}

double CorrelationModel::support_radius() const {
  return kind == CorrelationKind::GaussianBell ? 12.0 * length : 2.0 * kernel_radius;
}

double compact_kernel_value(double r, double rho0) {
  const double t = 1.0 - (r * r) / (rho0 * rho0);
  return t > 0.0 ? t * t * t : 0.0;
}

double compact_kernel_self_overlap(const CorrelationModel& model) {
  return compact_zero_overlap(model.kernel_radius, model.dim);
}

RadialDerivatives analytic_R(const CorrelationModel& model, double r) {
  if (r < 0.0) throw std::invalid_argument("analytic_R needs r >= 0");
  RadialDerivatives out;
  if (model.kind == CorrelationKind::GaussianBell) {
    const double l2 = model.length * model.length;
    out.value = model.amplitude * std::exp(-0.5 * r * r / l2);
    out.first = -out.value * r / l2;
    out.second = out.value * (r * r / l2 - 1.0) / l2;
    return out;
  }
  if (r >= 2.0 * model.kernel_radius || model.amplitude == 0.0) return out;
  const double scale = model.amplitude / compact_zero_overlap(model.kernel_radius, model.dim);
  out.value = scale * bump_overlap(model.kernel_radius, model.dim, Order::Zero, r);
  out.first = scale * bump_overlap(model.kernel_radius, model.dim, Order::One, r);
  out.second = scale * bump_overlap(model.kernel_radius, model.dim, Order::Two, r);
  return out;
}

double analytic_D_input(const CorrelationModel& model) {
  if (model.kind == CorrelationKind::GaussianBell)
    return -model.amplitude * std::sqrt(0.5 * std::numbers::pi) / model.length;
  if (model.amplitude == 0.0) return 0.0;
  auto f = [&](double s) {
    if (s <= 0.0) return analytic_R(model, 0.0).second;
    return analytic_R(model, s).first / s;
  };
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, 0.0, 2.0 * model.kernel_radius, 20, 1e-13, &err);
  return v;
}

// ---------------------------------------------------------------------------
// FieldRealization

FieldRealization::FieldRealization(CorrelationModel model, GridSpec grid, std::uint64_t seed,
                                   SynthesisMethod method, RealVec samples)
    : model_(model), grid_(grid), seed_(seed), method_(method), samples_(std::move(samples)) {
  grid_.validate();
  if (samples_.size() != grid_.size())
    throw std::invalid_argument("sample count does not match the grid");
  Fft fft(grid_);
  coeffs_ = to_complex(samples_);
  fft.forward(coeffs_);
  const double inv = 1.0 / static_cast<double>(grid_.size());
  for (auto& z : coeffs_) z *= inv;
  build_modes();
}

FieldRealization::FieldRealization(CorrelationModel model, GridSpec grid, std::uint64_t seed,
                                   SynthesisMethod method, RealVec samples,
                                   ComplexVec coefficients)
    : model_(model),
      grid_(grid),
      seed_(seed),
      method_(method),
      samples_(std::move(samples)),
      coeffs_(std::move(coefficients)) {
  grid_.validate();
  if (samples_.size() != grid_.size() || coeffs_.size() != grid_.size())
    throw std::invalid_argument("sample count does not match the grid");
  build_modes();
}

void FieldRealization::build_modes() {
  double cmax = 0.0;
  for (const auto& z : coeffs_) cmax = std::max(cmax, std::abs(z));
  modes_.clear();
  if (cmax == 0.0) return;
  const double cut = 1e-16 * cmax;
  for (std::size_t f = 0; f < coeffs_.size(); ++f) {
    if (std::abs(coeffs_[f]) <= cut) continue;
    auto idx = grid_.unravel(f);
    Vec3 k{0.0, 0.0, 0.0};
    for (int d = 0; d < grid_.dim; ++d) k[d] = grid_.wavenumber(idx[d]);
    modes_.push_back({k, coeffs_[f]});
  }
}

PotentialSample FieldRealization::eval(const Vec3& x) const {
  PotentialSample s;
  const int n = grid_.dim;
  Vec3 y{0.0, 0.0, 0.0};
  for (int d = 0; d < n; ++d) y[d] = x[d] - grid_.origin();
  for (const auto& m : modes_) {
    const Complex z = m.c * std::polar(1.0, dot(m.k, y, n));
    s.value += z.real();
    for (int d = 0; d < n; ++d) {
      s.gradient[d] -= m.k[d] * z.imag();
      for (int e = d; e < n; ++e) s.hessian[3 * d + e] -= m.k[d] * m.k[e] * z.real();
    }
  }
  for (int d = 0; d < n; ++d)
    for (int e = 0; e < d; ++e) s.hessian[3 * d + e] = s.hessian[3 * e + d];
  return s;
}

double FieldRealization::value(const Vec3& x) const {
  const int n = grid_.dim;
  Vec3 y{0.0, 0.0, 0.0};
  for (int d = 0; d < n; ++d) y[d] = x[d] - grid_.origin();
  double v = 0.0;
  for (const auto& m : modes_) v += (m.c * std::polar(1.0, dot(m.k, y, n))).real();
  return v;
}

SupNorms FieldRealization::sup_norms() const {
  if (sup_) return *sup_;
  SupNorms s;
  for (double v : samples_) s.value = std::max(s.value, std::abs(v));
  const int n = grid_.dim;
  Spectral sp(grid_);
  const double scale = static_cast<double>(grid_.size());
  auto field_from = [&](auto&& multiplier) {
    ComplexVec w(coeffs_.size());
    for (std::size_t f = 0; f < w.size(); ++f) w[f] = coeffs_[f] * multiplier(f) * scale;
    sp.fft().backward(w);
    RealVec out(w.size());
    for (std::size_t f = 0; f < w.size(); ++f) out[f] = w[f].real();
    return out;
  };
  RealVec grad2(grid_.size(), 0.0), hess2(grid_.size(), 0.0);
  for (int d = 0; d < n; ++d) {
    const auto& kd = sp.k_axis(d);
    auto g = field_from([&](std::size_t f) { return Complex(0.0, kd[f]); });
    for (std::size_t f = 0; f < g.size(); ++f) grad2[f] += g[f] * g[f];
    for (int e = d; e < n; ++e) {
      const auto& ke = sp.k_axis(e);
      auto hde = field_from([&](std::size_t f) { return Complex(-kd[f] * ke[f], 0.0); });
      const double w = (d == e) ? 1.0 : 2.0;
      for (std::size_t f = 0; f < hde.size(); ++f) hess2[f] += w * hde[f] * hde[f];
    }
  }
  for (std::size_t f = 0; f < grad2.size(); ++f) {
    s.gradient = std::max(s.gradient, std::sqrt(grad2[f]));
    s.hessian = std::max(s.hessian, std::sqrt(hess2[f]));
  }
  sup_ = s;
  return s;
}

nlohmann::json FieldRealization::metadata() const {
  const auto s = sup_norms();
  nlohmann::json j;
  j["kind"] = to_string(model_.kind);
  j["R0"] = model_.amplitude;
  j["ell"] = model_.length;
  if (model_.kind == CorrelationKind::CompactKernel) j["rho0"] = model_.kernel_radius;
  j["dim"] = grid_.dim;
  j["L"] = grid_.length;
  j["M"] = grid_.points;
  j["seed"] = seed_;
  j["method"] = to_string(method_);
  j["supV"] = s.value;
  j["supGradV"] = s.gradient;
  j["supHessV"] = s.hessian;
  return j;
}

void FieldRealization::dump(const std::filesystem::path& path) const {
  io::EnvelopeHeader h;
  h.dim = grid_.dim;
  h.points = grid_.points;
  h.length = grid_.length;
  h.seed = seed_;
  io::write_envelope(path, h, samples_);
}

// ---------------------------------------------------------------------------
// Synthesis

SpectralSynthesizer::SpectralSynthesizer(const CorrelationModel& model, const GridSpec& grid)
    : model_(model), grid_(grid), fft_((grid.validate(), grid)) {
  model.validate();
  if (model.kind == CorrelationKind::CompactKernel && model.dim != grid.dim)
    throw std::invalid_argument("compact kernel dimension differs from the grid dimension");
  const std::size_t n = grid.size();

  // Eigenvalues of the circulant covariance matrix of R/4 on the grid.
  auto cov = radial_samples(grid, [&](double r) { return 0.25 * analytic_R(model, r).value; });
  ComplexVec eig = to_complex(cov);
  fft_.forward(eig);
  double emax = 0.0, emin = 0.0;
  for (const auto& z : eig) {
    emax = std::max(emax, z.real());
    emin = std::min(emin, z.real());
  }
  if (emin < -1e-10 * std::max(emax, 1e-300))
    throw std::domain_error("invalid covariance: discretized spectral density has negative value " +
                            std::to_string(emin) + " (max " + std::to_string(emax) + ")");
  const double inv_n = 1.0 / static_cast<double>(n);
  amplitude_.resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    const double e = std::max(eig[f].real(), 0.0);
    amplitude_[f] = std::sqrt(e) * inv_n;
    if (f != 0) variance_ += e * inv_n;
  }
  amplitude_[0] = 0.0;  // exact zero mean per realization
}

FieldRealization SpectralSynthesizer::operator()(std::uint64_t seed) const {
  ComplexVec c = white_noise_spectrum(grid_, fft_, seed);
  for (std::size_t f = 0; f < c.size(); ++f) c[f] *= amplitude_[f];
  RealVec samples = samples_from_coefficients(c, fft_);
  return FieldRealization(model_, grid_, seed, SynthesisMethod::Spectral, std::move(samples),
                          std::move(c));
}

double SpectralSynthesizer::expected_variance() const { return variance_; }

FieldRealization synthesize_spectral(const CorrelationModel& model, const GridSpec& grid,
                                     std::uint64_t seed) {
  return SpectralSynthesizer(model, grid)(seed);
}

namespace {

void check_moving_average(const CorrelationModel& model, const GridSpec& grid) {
  model.validate();
  grid.validate();
  if (model.kind != CorrelationKind::CompactKernel)
    throw std::invalid_argument("moving-average synthesis needs a compact-kernel model");
  if (model.dim != grid.dim)
    throw std::invalid_argument("compact kernel dimension differs from the grid dimension");
  if (model.kernel_radius >= 0.25 * grid.length)
    throw std::invalid_argument("kernel radius rho0 must be below L/4");
  if (model.kernel_radius < 2.0 * grid.spacing())
    throw std::invalid_argument("kernel radius rho0 must span at least two grid cells");
}

double moving_average_amplitude(const CorrelationModel& model) {
  return std::sqrt(0.25 * model.amplitude / compact_kernel_self_overlap(model));
}

}  // namespace

double moving_average_variance(const CorrelationModel& model, const GridSpec& grid) {
  check_moving_average(model, grid);
  auto k = radial_samples(grid, [&](double r) { return compact_kernel_value(r, model.kernel_radius); });
  double s = 0.0;
  for (double v : k) s += v * v;
  const double amp = moving_average_amplitude(model);
  return amp * amp * grid.cell_volume() * s;
}

FieldRealization synthesize_moving_average(const CorrelationModel& model, const GridSpec& grid,
                                           std::uint64_t seed) {
  check_moving_average(model, grid);
  Fft fft(grid);
  const std::size_t n = grid.size();
  ComplexVec kernel =
      to_complex(radial_samples(grid, [&](double r) { return compact_kernel_value(r, model.kernel_radius); }));
  fft.forward(kernel);
  ComplexVec c = white_noise_spectrum(grid, fft, seed);
  const double scale =
      moving_average_amplitude(model) * std::sqrt(grid.cell_volume()) / static_cast<double>(n);
  for (std::size_t f = 0; f < n; ++f) c[f] *= kernel[f] * scale;
  RealVec samples = samples_from_coefficients(c, fft);
  return FieldRealization(model, grid, seed, SynthesisMethod::MovingAverage, std::move(samples),
                          std::move(c));
}

// ---------------------------------------------------------------------------
// Cubic B-spline interpolant

namespace {

struct SplineWeights {
  int base = 0;  // index of the first of four contributing coefficients
  double w[4], dw[4], d2w[4];
};

SplineWeights spline_weights(double t) {
  SplineWeights s;
  const double fl = std::floor(t);
  const double u = t - fl;
  s.base = static_cast<int>(fl) - 1;
  const double v = 1.0 - u;
  s.w[0] = v * v * v / 6.0;
  s.w[1] = (3.0 * u * u * u - 6.0 * u * u + 4.0) / 6.0;
  s.w[2] = (-3.0 * u * u * u + 3.0 * u * u + 3.0 * u + 1.0) / 6.0;
  s.w[3] = u * u * u / 6.0;
  s.dw[0] = -0.5 * v * v;
  s.dw[1] = 1.5 * u * u - 2.0 * u;
  s.dw[2] = -1.5 * u * u + u + 0.5;
  s.dw[3] = 0.5 * u * u;
  s.d2w[0] = v;
  s.d2w[1] = 3.0 * u - 2.0;
  s.d2w[2] = 1.0 - 3.0 * u;
  s.d2w[3] = u;
  return s;
}

inline int wrap_index(int i, int m) {
  i %= m;
  return i < 0 ? i + m : i;
}

}  // namespace

SplinePotential::SplinePotential(const FieldRealization& field) : grid_(field.grid()) {
  // Interpolation conditions are a circulant system with symbol
  // Π_d (4 + 2 cos(k_d dx)) / 6; solve it in Fourier space.
  const auto& c = field.coefficients();
  const double dx = grid_.spacing();
  ComplexVec w(c.size());
  for (std::size_t f = 0; f < c.size(); ++f) {
    auto idx = grid_.unravel(f);
    double symbol = 1.0;
    for (int d = 0; d < grid_.dim; ++d)
      symbol *= (4.0 + 2.0 * std::cos(grid_.wavenumber(idx[d]) * dx)) / 6.0;
    w[f] = c[f] * static_cast<double>(c.size()) / symbol;
  }
  Fft fft(grid_);
  fft.backward(w);
  coef_.resize(w.size());
  for (std::size_t f = 0; f < w.size(); ++f) coef_[f] = w[f].real();
}

PotentialSample SplinePotential::eval(const Vec3& x) const {
  const int n = grid_.dim;
  const int m = grid_.points;
  const double dx = grid_.spacing();
  std::array<SplineWeights, 3> sw;
  for (int d = 0; d < n; ++d) sw[d] = spline_weights((x[d] - grid_.origin()) / dx);

  PotentialSample s;
  const double inv = 1.0 / dx;
  if (n == 1) {
    for (int a = 0; a < 4; ++a) {
      const double c = coef_[wrap_index(sw[0].base + a, m)];
      s.value += c * sw[0].w[a];
      s.gradient[0] += c * sw[0].dw[a];
      s.hessian[0] += c * sw[0].d2w[a];
    }
  } else if (n == 2) {
    for (int a = 0; a < 4; ++a) {
      const std::size_t row = static_cast<std::size_t>(wrap_index(sw[0].base + a, m)) * m;
      for (int b = 0; b < 4; ++b) {
        const double c = coef_[row + wrap_index(sw[1].base + b, m)];
        s.value += c * sw[0].w[a] * sw[1].w[b];
        s.gradient[0] += c * sw[0].dw[a] * sw[1].w[b];
        s.gradient[1] += c * sw[0].w[a] * sw[1].dw[b];
        s.hessian[0] += c * sw[0].d2w[a] * sw[1].w[b];
        s.hessian[1] += c * sw[0].dw[a] * sw[1].dw[b];
        s.hessian[4] += c * sw[0].w[a] * sw[1].d2w[b];
      }
    }
    s.hessian[3] = s.hessian[1];
  } else {
    for (int a = 0; a < 4; ++a) {
      const std::size_t i0 = static_cast<std::size_t>(wrap_index(sw[0].base + a, m));
      for (int b = 0; b < 4; ++b) {
        const std::size_t i1 = static_cast<std::size_t>(wrap_index(sw[1].base + b, m));
        for (int e = 0; e < 4; ++e) {
          const double c = coef_[(i0 * m + i1) * m + wrap_index(sw[2].base + e, m)];
          const double w0 = sw[0].w[a], w1 = sw[1].w[b], w2 = sw[2].w[e];
          const double d0 = sw[0].dw[a], d1 = sw[1].dw[b], d2 = sw[2].dw[e];
          s.value += c * w0 * w1 * w2;
          s.gradient[0] += c * d0 * w1 * w2;
          s.gradient[1] += c * w0 * d1 * w2;
          s.gradient[2] += c * w0 * w1 * d2;
          s.hessian[0] += c * sw[0].d2w[a] * w1 * w2;
          s.hessian[4] += c * w0 * sw[1].d2w[b] * w2;
          s.hessian[8] += c * w0 * w1 * sw[2].d2w[e];
          s.hessian[1] += c * d0 * d1 * w2;
          s.hessian[2] += c * d0 * w1 * d2;
          s.hessian[5] += c * w0 * d1 * d2;
        }
      }
    }
    s.hessian[3] = s.hessian[1];
    s.hessian[6] = s.hessian[2];
    s.hessian[7] = s.hessian[5];
  }
  for (int d = 0; d < n; ++d) s.gradient[d] *= inv;
  for (auto& h : s.hessian) h *= inv * inv;
  return s;
}

Vec3 SplinePotential::gradient(const Vec3& x) const { return eval(x).gradient; }

// ---------------------------------------------------------------------------
// Random Fourier features

FourierFeatureField::FourierFeatureField(const CorrelationModel& model, int dim, int features,
                                         std::uint64_t seed)
    : dim_(dim) {
  model.validate();
  if (model.kind != CorrelationKind::GaussianBell)
    throw std::invalid_argument("random-fourier synthesis supports the gaussian-bell model only");
  if (dim < 1 || dim > 3) throw std::invalid_argument("dimension must be 1..3");
  if (features < 1) throw std::invalid_argument("feature count must be positive");
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = std::sqrt(0.25 * model.amplitude / features);
  k_.resize(features);
  cos_amp_.resize(features);
  sin_amp_.resize(features);
  for (int j = 0; j < features; ++j) {
    Vec3 k{0.0, 0.0, 0.0};
    for (int d = 0; d < dim; ++d) k[d] = normal(rng) / model.length;
    k_[j] = k;
    cos_amp_[j] = sigma * normal(rng);
    sin_amp_[j] = sigma * normal(rng);
  }
}

PotentialSample FourierFeatureField::eval(const Vec3& x) const {
  PotentialSample s;
  for (std::size_t j = 0; j < k_.size(); ++j) {
    const double ph = dot(k_[j], x, dim_);
    const double c = std::cos(ph), sn = std::sin(ph);
    const double v = cos_amp_[j] * c + sin_amp_[j] * sn;
    const double dv = -cos_amp_[j] * sn + sin_amp_[j] * c;
    s.value += v;
    for (int d = 0; d < dim_; ++d) {
      s.gradient[d] += dv * k_[j][d];
      for (int e = d; e < dim_; ++e) s.hessian[3 * d + e] -= v * k_[j][d] * k_[j][e];
    }
  }
  for (int d = 0; d < dim_; ++d)
    for (int e = 0; e < d; ++e) s.hessian[3 * d + e] = s.hessian[3 * e + d];
  return s;
}

Vec3 FourierFeatureField::gradient(const Vec3& x) const {
  Vec3 g{0.0, 0.0, 0.0};
  for (std::size_t j = 0; j < k_.size(); ++j) {
    const double ph = dot(k_[j], x, dim_);
    const double dv = -cos_amp_[j] * std::sin(ph) + sin_amp_[j] * std::cos(ph);
    for (int d = 0; d < dim_; ++d) g[d] += dv * k_[j][d];
  }
  return g;
}

double FourierFeatureField::value(const Vec3& x) const {
  double v = 0.0;
  for (std::size_t j = 0; j < k_.size(); ++j) {
    const double ph = dot(k_[j], x, dim_);
    v += cos_amp_[j] * std::cos(ph) + sin_amp_[j] * std::sin(ph);
  }
  return v;
}

// ---------------------------------------------------------------------------

CorrelationReport empirical_correlation(std::span<const FieldRealization> ensemble,
                                        std::span<const int> lag_indices) {
  CorrelationReport report;
  report.realizations = static_cast<int>(ensemble.size());
  report.too_few_realizations = ensemble.size() < 100;
  if (ensemble.empty()) return report;
  const GridSpec grid = ensemble.front().grid();
  for (const auto& f : ensemble)
    if (!(f.grid() == grid)) throw std::invalid_argument("ensemble members use different grids");

  const std::size_t n = grid.size();
  const std::size_t stride = n / grid.points;  // axis 0 is the slowest
  for (int lag : lag_indices) {
    double sum = 0.0, sum2 = 0.0;
    for (const auto& field : ensemble) {
      const auto& v = field.samples();
      double acc = 0.0;
      for (std::size_t f = 0; f < n; ++f) {
        const std::size_t i0 = f / stride;
        const std::size_t shifted =
            static_cast<std::size_t>(wrap_index(static_cast<int>(i0) + lag, grid.points)) * stride +
            f % stride;
        acc += v[shifted] * v[f];
      }
      acc /= static_cast<double>(n);
      sum += acc;
      sum2 += acc * acc;
    }
    const double cnt = static_cast<double>(ensemble.size());
    CorrelationEstimate e;
    e.lag_index = lag;
    e.lag = lag * grid.spacing();
    e.mean = sum / cnt;
    const double var = cnt > 1 ? std::max(0.0, (sum2 - cnt * e.mean * e.mean) / (cnt - 1.0)) : 0.0;
    e.stderr_ = std::sqrt(var / cnt);
    report.estimates.push_back(e);
  }
  return report;
}

}  // namespace solacc
