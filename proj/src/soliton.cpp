#include "solacc/soliton.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "solacc/io.hpp"

namespace solacc {

namespace {

double grid_mass(const RealVec& eta, const GridSpec& grid) {
  double s = 0.0;
  for (double v : eta) s += v * v;
  return 0.5 * s * grid.cell_volume();
}

void check_nonlinearity(double s, int dim) {
  if (!(s > 0.0) || !(s < 4.0 / dim))
    throw std::invalid_argument("nonlinearity exponent s must lie in (0, 4/N) for orbital stability; got s=" +
                                std::to_string(s) + ", N=" + std::to_string(dim));
}

struct FixedPoint {
  RealVec eta;
  double residual;
  int iterations;
};

// Spectral residual ‖(k²+μ)û - N̂‖/‖û‖ (Parseval, so grid weights cancel).
double spectral_residual(const ComplexVec& uhat, const ComplexVec& nhat, const RealVec& k2, double mu) {
  double num = 0.0, den = 0.0;
  for (std::size_t f = 0; f < uhat.size(); ++f) {
    num += std::norm((k2[f] + mu) * uhat[f] - nhat[f]);
    den += std::norm(uhat[f]);
  }
  return std::sqrt(num / den);
}

FixedPoint petviashvili_solve(double mu, double s, const Spectral& sp, int max_iter, double tol) {
  const GridSpec& grid = sp.grid();
  const std::size_t n = grid.size();
  const auto& k2 = sp.k_squared();
  // Start from the exact 1D profile for exponent s, evaluated radially.
  const double amp = std::pow(0.5 * mu * (s + 2.0), 1.0 / s);
  RealVec u(n);
  for (std::size_t f = 0; f < n; ++f) {
    const double r = norm(grid.position(f), grid.dim);
    u[f] = amp * std::pow(1.0 / std::cosh(0.5 * s * std::sqrt(mu) * r), 2.0 / s);
  }
  const double gamma = 1.5;
  double residual = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    ComplexVec uhat = to_complex(u);
    ComplexVec nhat(n);
    for (std::size_t f = 0; f < n; ++f) nhat[f] = std::pow(std::abs(u[f]), s) * u[f];
    sp.fft().forward(uhat);
    sp.fft().forward(nhat);
    residual = spectral_residual(uhat, nhat, k2, mu);
    if (residual <= tol) return {std::move(u), residual, it};
    double num = 0.0, den = 0.0;
    for (std::size_t f = 0; f < n; ++f) {
      num += (k2[f] + mu) * std::norm(uhat[f]);
      den += (std::conj(uhat[f]) * nhat[f]).real();
    }
    const double factor = std::pow(num / den, gamma);
    for (std::size_t f = 0; f < n; ++f) nhat[f] *= factor / (k2[f] + mu);
    sp.fft().backward(nhat);
    for (std::size_t f = 0; f < n; ++f) u[f] = nhat[f].real();
  }
  throw ProfileNotConverged("profile iteration did not converge after " + std::to_string(max_iter) +
                                " iterations (residual " + std::to_string(residual) + ")",
                            residual);
}

}  // namespace

double reduce_phase(double gamma) {
  const double two_pi = 2.0 * std::numbers::pi;
  double g = std::fmod(gamma, two_pi);
  if (g < 0.0) g += two_pi;
  if (g >= two_pi) g -= two_pi;
  return g;
}

double profile_residual(const RealVec& eta, double mu, double s, const Spectral& sp) {
  ComplexVec uhat = to_complex(eta);
  ComplexVec nhat(eta.size());
  for (std::size_t f = 0; f < eta.size(); ++f) nhat[f] = std::pow(std::abs(eta[f]), s) * eta[f];
  sp.fft().forward(uhat);
  sp.fft().forward(nhat);
  return spectral_residual(uhat, nhat, sp.k_squared(), mu);
}

Profile profile_1d_cubic(double mu, const GridSpec& grid) {
  if (!(mu > 0.0)) throw std::invalid_argument("profile needs mu > 0");
  if (grid.dim != 1) throw std::invalid_argument("closed-form cubic profile is one-dimensional");
  CubicProfile1D family(grid);
  Profile p;
  p.mu = mu;
  p.s = 2.0;
  p.dim = 1;
  p.grid = grid;
  p.eta = family.profile_at(mu, {0.0, 0.0, 0.0});
  p.mass = family.mass(mu);
  p.mass_prime = family.mass_prime(mu);
  p.residual = profile_residual(p.eta, mu, 2.0, Spectral(grid));
  return p;
}

Profile profile_petviashvili(double mu, double s, const GridSpec& grid, int max_iter, double tol) {
  grid.validate();
  check_nonlinearity(s, grid.dim);
  if (!(mu > 0.0)) throw std::invalid_argument("profile needs mu > 0");
  if (tol < 1e-12) throw std::invalid_argument("profile tolerance must be at least 1e-12");
  Spectral sp(grid);
  auto main = petviashvili_solve(mu, s, sp, max_iter, tol);
  const double dmu = ProfileFamily::kMuStep * mu;
  auto lo = petviashvili_solve(mu - dmu, s, sp, max_iter, tol);
  auto hi = petviashvili_solve(mu + dmu, s, sp, max_iter, tol);
  Profile p;
  p.mu = mu;
  p.s = s;
  p.dim = grid.dim;
  p.grid = grid;
  p.eta = std::move(main.eta);
  p.residual = main.residual;
  p.iterations = main.iterations;
  p.mass = grid_mass(p.eta, grid);
  p.mass_prime = (grid_mass(hi.eta, grid) - grid_mass(lo.eta, grid)) / (2.0 * dmu);
  return p;
}

void write_profile_cache(const std::filesystem::path& stem, const Profile& profile) {
  nlohmann::json j;
  j["mu"] = profile.mu;
  j["s"] = profile.s;
  j["N"] = profile.dim;
  j["M"] = profile.grid.points;
  j["L"] = profile.grid.length;
  j["residual"] = profile.residual;
  j["mass"] = profile.mass;
  j["massPrime"] = profile.mass_prime;
  auto json_path = stem;
  json_path += ".json";
  std::ofstream(json_path) << j.dump(2) << '\n';

  const int m = profile.grid.points;
  std::size_t stride = 1, centre = 0;
  for (int d = profile.dim - 1; d >= 0; --d) {
    centre += static_cast<std::size_t>(m / 2) * stride;
    if (d > 0) stride *= m;
  }
  RealVec radial;
  for (int i = 0; i < m / 2; ++i) radial.push_back(profile.eta[centre + i * stride]);
  io::EnvelopeHeader h;
  h.dim = profile.dim;
  h.points = m;
  h.length = profile.grid.length;
  auto bin_path = stem;
  bin_path += ".bin";
  io::write_envelope(bin_path, h, radial);
}

// ---------------------------------------------------------------------------

RealVec ProfileFamily::dmu_profile_at(double mu, const Vec3& a) const {
  const double d = kMuStep * mu;
  RealVec hi = profile_at(mu + d, a);
  RealVec lo = profile_at(mu - d, a);
  for (std::size_t f = 0; f < hi.size(); ++f) hi[f] = (hi[f] - lo[f]) / (2.0 * d);
  return hi;
}

double ProfileFamily::mu_from_mass(double m) const {
  if (!(m > 0.0)) throw std::invalid_argument("cannot invert soliton mass: charge is not positive");
  const double p = 2.0 / nonlinearity() - 0.5 * grid().dim;
  const double m1 = mass(1.0);
  return std::pow(m / m1, 1.0 / p);
}

CubicProfile1D::CubicProfile1D(const GridSpec& grid) : grid_(grid) {
  grid_.validate();
  if (grid_.dim != 1) throw std::invalid_argument("cubic closed-form family is one-dimensional");
}

RealVec CubicProfile1D::profile_at(double mu, const Vec3& a) const {
  if (!(mu > 0.0)) throw std::invalid_argument("profile needs mu > 0");
  const double amp = std::sqrt(2.0 * mu);
  const double rate = std::sqrt(mu);
  RealVec out(grid_.points);
  for (int j = 0; j < grid_.points; ++j) {
    const double y = wrap_centered(grid_.coordinate(j) - a[0], grid_.length);
    out[j] = amp / std::cosh(rate * y);
  }
  return out;
}

double CubicProfile1D::mass(double mu) const { return 2.0 * std::sqrt(mu); }
double CubicProfile1D::mass_prime(double mu) const { return 1.0 / std::sqrt(mu); }

GridProfile::GridProfile(double s, const GridSpec& grid, double mu_ref)
    : s_(s), grid_(grid), spectral_(grid), reference_(profile_petviashvili(mu_ref, s, grid, 5000, 1e-12)) {}

RealVec GridProfile::centred(double mu) const {
  if (!(mu > 0.0)) throw std::invalid_argument("profile needs mu > 0");
  std::lock_guard lock(mutex_);
  const double d = kMuStep;
  // Nearest anchor in relative distance.
  double best = 0.0, best_dist = 1e300;
  for (const auto& [m0, _] : anchors_) {
    const double dist = std::abs(mu / m0 - 1.0);
    if (dist < best_dist) {
      best_dist = dist;
      best = m0;
    }
  }
  // Interpolate between the three nodes only; extrapolating the quadratic
  // loses several digits.
  if (best_dist > d * (1.0 + 1e-6)) {
    std::array<RealVec, 3> nodes;
    for (int i = 0; i < 3; ++i)
      nodes[i] = petviashvili_solve(mu * (1.0 + (i - 1) * d), s_, spectral_, 5000, 1e-12).eta;
    anchors_.emplace(mu, std::move(nodes));
    best = mu;
  }
  const auto& nodes = anchors_.at(best);
  const double t = (mu / best - 1.0) / d;
  const double wm = 0.5 * t * (t - 1.0), w0 = (1.0 - t) * (1.0 + t), wp = 0.5 * t * (t + 1.0);
  RealVec out(nodes[1].size());
  for (std::size_t f = 0; f < out.size(); ++f)
    out[f] = wm * nodes[0][f] + w0 * nodes[1][f] + wp * nodes[2][f];
  return out;
}

RealVec GridProfile::profile_at(double mu, const Vec3& a) const {
  RealVec eta = centred(mu);
  bool moved = false;
  for (int d = 0; d < grid_.dim; ++d) moved = moved || a[d] != 0.0;
  if (!moved) return eta;
  ComplexVec w = spectral_.translate(to_complex(eta), a);
  for (std::size_t f = 0; f < eta.size(); ++f) eta[f] = w[f].real();
  return eta;
}

double GridProfile::mass(double mu) const { return grid_mass(centred(mu), grid_); }

double GridProfile::mass_prime(double mu) const {
  const double d = kMuStep * mu;
  return (mass(mu + d) - mass(mu - d)) / (2.0 * d);
}

// ---------------------------------------------------------------------------

BuiltSoliton build_soliton(const SolitonParams& sigma, const ProfileFamily& family) {
  const GridSpec& grid = family.grid();
  if (!(sigma.mu > 0.0)) throw std::invalid_argument("soliton needs mu > 0");
  RealVec p = family.profile_at(sigma.mu, sigma.a);
  BuiltSoliton out;
  out.field.resize(p.size());
  for (std::size_t f = 0; f < p.size(); ++f) {
    const Vec3 x = grid.position(f);
    double phase = sigma.gamma;
    for (int d = 0; d < grid.dim; ++d)
      phase += 0.5 * sigma.v[d] * wrap_centered(x[d] - sigma.a[d], grid.length);
    out.field[f] = std::polar(p[f], phase);
  }
  out.edge_warning = 0.5 * grid.length < 6.0 / std::sqrt(sigma.mu);
  return out;
}

std::vector<ComplexVec> tangent_vectors(const SolitonParams& sigma, const ProfileFamily& family,
                                        const Spectral& spectral) {
  const GridSpec& grid = family.grid();
  const int n = grid.dim;
  const ComplexVec eta = build_soliton(sigma, family).field;
  const std::size_t size = eta.size();
  const Complex I(0.0, 1.0);
  std::vector<ComplexVec> out;
  out.reserve(2 * n + 2);
  for (int d = 0; d < n; ++d) {
    ComplexVec g = spectral.derivative(eta, d);
    for (auto& z : g) z = -z;
    out.push_back(std::move(g));
  }
  RealVec phase(size);
  for (std::size_t f = 0; f < size; ++f) {
    const Vec3 x = grid.position(f);
    double ph = sigma.gamma;
    for (int d = 0; d < n; ++d) ph += 0.5 * sigma.v[d] * wrap_centered(x[d] - sigma.a[d], grid.length);
    phase[f] = ph;
  }
  for (int d = 0; d < n; ++d) {
    ComplexVec b(size);
    for (std::size_t f = 0; f < size; ++f) {
      const double xd = sigma.a[d] + wrap_centered(grid.position(f)[d] - sigma.a[d], grid.length);
      b[f] = I * xd * eta[f];
    }
    out.push_back(std::move(b));
  }
  ComplexVec g(size);
  for (std::size_t f = 0; f < size; ++f) g[f] = I * eta[f];
  out.push_back(std::move(g));
  RealVec dmu = family.dmu_profile_at(sigma.mu, sigma.a);
  ComplexVec sv(size);
  for (std::size_t f = 0; f < size; ++f) sv[f] = std::polar(dmu[f], phase[f]);
  out.push_back(std::move(sv));
  return out;
}

Eigen::MatrixXd symplectic_matrix(const SolitonParams& sigma, int dim, double m, double m_prime) {
  if (!(m_prime > 0.0))
    throw std::invalid_argument("m'(mu) must be positive (orbital stability); got " + std::to_string(m_prime));
  const int n = dim;
  const int size = 2 * n + 2;
  const int g = 2 * n, s = 2 * n + 1;
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(size, size);
  for (int i = 0; i < n; ++i) {
    xi(i, n + i) = -m;
    xi(n + i, i) = m;
    xi(i, s) = -0.5 * sigma.v[i] * m_prime;
    xi(s, i) = 0.5 * sigma.v[i] * m_prime;
    xi(n + i, s) = sigma.a[i] * m_prime;
    xi(s, n + i) = -sigma.a[i] * m_prime;
  }
  xi(g, s) = m_prime;
  xi(s, g) = -m_prime;
  if (!(std::abs(xi.determinant()) > 0.0)) throw std::logic_error("symplectic matrix is singular");
  return xi;
}

Eigen::MatrixXd symplectic_gram(const std::vector<ComplexVec>& tangents, const GridSpec& grid) {
  const int size = static_cast<int>(tangents.size());
  Eigen::MatrixXd out(size, size);
  const Complex I(0.0, 1.0);
  for (int b = 0; b < size; ++b) {
    ComplexVec ib = tangents[b];
    for (auto& z : ib) z *= I;
    for (int a = 0; a < size; ++a) out(a, b) = inner(tangents[a], ib, grid);
  }
  return out;
}

ComplexVec apply_hessian(const ComplexVec& w, const RealVec& eta, double mu, double s,
                         const Spectral& spectral) {
  ComplexVec out = w;
  spectral.fft().forward(out);
  const auto& k2 = spectral.k_squared();
  for (std::size_t f = 0; f < out.size(); ++f) out[f] *= k2[f] + mu;
  spectral.fft().backward(out);
  for (std::size_t f = 0; f < out.size(); ++f) {
    const double p = std::pow(std::abs(eta[f]), s);
    out[f] -= Complex((s + 1.0) * p * w[f].real(), p * w[f].imag());
  }
  return out;
}

ZeroModeReport zero_mode_residuals(const ProfileFamily& family, double mu) {
  const GridSpec& grid = family.grid();
  const double s = family.nonlinearity();
  Spectral sp(grid);
  const Vec3 origin{0.0, 0.0, 0.0};
  const RealVec eta = family.profile_at(mu, origin);
  const ComplexVec ceta = to_complex(eta);
  const double eta_norm = std::sqrt(l2_squared(ceta, grid));
  const Complex I(0.0, 1.0);
  ZeroModeReport r;

  for (int d = 0; d < grid.dim; ++d) {
    ComplexVec g = sp.derivative(ceta, d);
    const double res = std::sqrt(l2_squared(apply_hessian(g, eta, mu, s, sp), grid) / l2_squared(g, grid));
    r.translation = std::max(r.translation, res);
  }
  {
    ComplexVec ie(ceta.size());
    for (std::size_t f = 0; f < ie.size(); ++f) ie[f] = I * eta[f];
    r.gauge = std::sqrt(l2_squared(apply_hessian(ie, eta, mu, s, sp), grid)) / eta_norm;
  }
  {
    ComplexVec b(ceta.size());
    for (std::size_t f = 0; f < b.size(); ++f) b[f] = I * grid.position(f)[0] * eta[f];
    ComplexVec lb = apply_hessian(b, eta, mu, s, sp);
    ComplexVec target = sp.derivative(ceta, 0);
    for (auto& z : target) z *= I;
    const double tt = l2_squared(target, grid);
    r.boost_factor = inner(lb, target, grid) / tt;
    ComplexVec diff = lb;
    for (std::size_t f = 0; f < diff.size(); ++f) diff[f] -= r.boost_factor * target[f];
    const double lb2 = l2_squared(lb, grid);
    r.boost_ratio = std::sqrt(lb2 / tt);
    r.boost_parallel_residual = std::sqrt(l2_squared(diff, grid) / lb2);
  }
  {
    ComplexVec dm = to_complex(family.dmu_profile_at(mu, origin));
    r.scaling_ratio = std::sqrt(l2_squared(apply_hessian(dm, eta, mu, s, sp), grid)) / eta_norm;
  }
  return r;
}

}  // namespace solacc
