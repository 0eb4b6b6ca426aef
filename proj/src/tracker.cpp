#include "solacc/tracker.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "solacc/io.hpp"

namespace solacc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

SolitonParams unpack(const Eigen::VectorXd& x, int n) {
  SolitonParams s;
  for (int d = 0; d < n; ++d) {
    s.a[d] = x(d);
    s.v[d] = x(n + d);
  }
  s.gamma = x(2 * n);
  s.mu = x(2 * n + 1);
  return s;
}

Eigen::VectorXd pack(const SolitonParams& s, int n) {
  Eigen::VectorXd x(2 * n + 2);
  for (int d = 0; d < n; ++d) {
    x(d) = s.a[d];
    x(n + d) = s.v[d];
  }
  x(2 * n) = s.gamma;
  x(2 * n + 1) = s.mu;
  return x;
}

struct Conditions {
  Eigen::VectorXd g;
  std::vector<ComplexVec> itangents;  // i e_α η_σ
};

Conditions orthogonality(const ComplexVec& psi, const SolitonParams& sigma,
                         const ProfileFamily& family, const Spectral& spectral) {
  const GridSpec& grid = family.grid();
  if (!(sigma.mu > 0.0)) throw TrackingLost("soliton scale mu left (0, inf)", {}, std::nan(""));
  ComplexVec diff = build_soliton(sigma, family).field;
  for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = psi[j] - diff[j];
  Conditions c;
  c.itangents = tangent_vectors(sigma, family, spectral);
  c.g.resize(static_cast<Eigen::Index>(c.itangents.size()));
  for (std::size_t a = 0; a < c.itangents.size(); ++a) {
    for (auto& z : c.itangents[a]) z *= Complex(0.0, 1.0);
    c.g(static_cast<Eigen::Index>(a)) = inner(diff, c.itangents[a], grid);
  }
  return c;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

double h1_norm(const ComplexVec& w, const Spectral& spectral) {
  ComplexVec hat = w;
  spectral.fft().forward(hat);
  const auto& k2 = spectral.k_squared();
  double s = 0.0;
  for (std::size_t f = 0; f < hat.size(); ++f) s += (1.0 + k2[f]) * std::norm(hat[f]);
  return std::sqrt(s * spectral.grid().cell_volume() / static_cast<double>(hat.size()));
}

SolitonParams moment_initializer(const ComplexVec& psi, const ProfileFamily& family,
                                 const Spectral& spectral) {
  const GridSpec& grid = family.grid();
  const int n = grid.dim;
  const double charge = 0.5 * l2_squared(psi, grid);
  if (!(charge > 1e-12)) throw std::invalid_argument("moment initializer: charge is (near) zero");

  SolitonParams s;
  for (int d = 0; d < n; ++d) {
    Complex z(0.0, 0.0);
    for (std::size_t j = 0; j < psi.size(); ++j) {
      const double th = kTwoPi * (grid.position(j)[d] - grid.origin()) / grid.length;
      z += std::norm(psi[j]) * std::polar(1.0, th);
    }
    s.a[d] = wrap_centered(grid.origin() + grid.length * std::arg(z) / kTwoPi, grid.length);
  }
  ComplexVec ipsi = psi;
  for (auto& z : ipsi) z *= Complex(0.0, 1.0);
  for (int d = 0; d < n; ++d) s.v[d] = inner(ipsi, spectral.derivative(psi, d), grid) / charge;
  s.mu = family.mu_from_mass(charge);

  // Phase at the grid point nearest the centre, minus the boost phase there.
  std::size_t flat = 0;
  double boost = 0.0;
  for (int d = 0; d < n; ++d) {
    long i = std::lround((s.a[d] - grid.origin()) / grid.spacing());
    i = ((i % grid.points) + grid.points) % grid.points;
    flat = flat * grid.points + static_cast<std::size_t>(i);
    boost += 0.5 * s.v[d] * wrap_centered(grid.coordinate(static_cast<int>(i)) - s.a[d], grid.length);
  }
  s.gamma = reduce_phase(std::arg(psi[flat]) - boost);
  return s;
}

Decomposition project(const ComplexVec& psi, const SolitonParams& guess, const ProfileFamily& family,
                      const Spectral& spectral, const ProjectOptions& options) {
  const GridSpec& grid = family.grid();
  const int n = grid.dim;
  const int size = 2 * n + 2;
  const double psi_h1 = h1_norm(psi, spectral);
  Eigen::VectorXd x = pack(guess, n);

  Decomposition dec;
  Conditions cur = orthogonality(psi, guess, family, spectral);
  auto newton_step = [&](const Eigen::VectorXd& at, const Conditions& here) {
    Eigen::MatrixXd jac(size, size);
    for (int b = 0; b < size; ++b) {
      double step = 1e-6;
      if (b >= n && b < 2 * n) step = 1e-6 * std::max(1.0, std::abs(at(b)));
      if (b == 2 * n + 1) step = 1e-6 * at(b);
      Eigen::VectorXd xb = at;
      xb(b) += step;
      jac.col(b) = (orthogonality(psi, unpack(xb, n), family, spectral).g - here.g) / step;
    }
    return Eigen::VectorXd(jac.fullPivLu().solve(-here.g));
  };
  for (int it = 0; it <= options.max_iter; ++it) {
    bool ok = true;
    for (int a = 0; a < size; ++a) {
      const double scale = options.tolerance * psi_h1 * h1_norm(cur.itangents[a], spectral);
      if (std::abs(cur.g(a)) > scale) {
        ok = false;
        break;
      }
    }
    dec.iterations = it;
    if (ok) {
      dec.converged = true;
      break;
    }
    if (it == options.max_iter) break;

    const Eigen::VectorXd dx = newton_step(x, cur);
    if (!dx.allFinite())
      throw TrackingLost("singular Newton system in skew-orthogonal projection", to_std(cur.g), std::nan(""));
    x += dx;
    if (!(x(2 * n + 1) > 0.0))
      throw TrackingLost("soliton scale mu became non-positive during projection", to_std(cur.g), std::nan(""));
    cur = orthogonality(psi, unpack(x, n), family, spectral);
  }
  // Once inside the tolerance, a couple of extra Newton steps are cheap and
  // bring σ to rounding level; keep them only while they help.
  for (int polish = 0; dec.converged && polish < 2; ++polish) {
    const Eigen::VectorXd dx = newton_step(x, cur);
    if (!dx.allFinite()) break;
    const Eigen::VectorXd trial = x + dx;
    if (!(trial(2 * n + 1) > 0.0)) break;
    Conditions next = orthogonality(psi, unpack(trial, n), family, spectral);
    if (!(next.g.cwiseAbs().maxCoeff() < 0.5 * cur.g.cwiseAbs().maxCoeff())) break;
    x = trial;
    cur = std::move(next);
  }

  dec.sigma = unpack(x, n);
  for (int d = 0; d < n; ++d) dec.sigma.a[d] = wrap_centered(dec.sigma.a[d], grid.length);
  dec.sigma.gamma = reduce_phase(dec.sigma.gamma);
  dec.residuals = to_std(cur.g);
  ComplexVec eta = build_soliton(dec.sigma, family).field;
  dec.w.resize(psi.size());
  for (std::size_t j = 0; j < psi.size(); ++j) dec.w[j] = psi[j] - eta[j];
  dec.wH1 = h1_norm(dec.w, spectral);
  if (!dec.converged) {
    std::ostringstream os;
    os << "skew-orthogonal projection did not converge in " << options.max_iter << " iterations";
    throw TrackingLost(os.str(), dec.residuals, dec.wH1);
  }
  if (dec.wH1 > options.delta * psi_h1) {
    std::ostringstream os;
    os << "state left the soliton neighbourhood: |w|_H1 = " << dec.wH1 << " > " << options.delta
       << " |psi|_H1";
    throw TrackingLost(os.str(), dec.residuals, dec.wH1);
  }
  return dec;
}

std::vector<double> unwrap_phase(const std::vector<double>& gamma, bool* ambiguous) {
  std::vector<double> out(gamma.size());
  bool amb = false;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    if (i == 0) {
      out[i] = gamma[i];
      continue;
    }
    double d = gamma[i] - gamma[i - 1];
    d -= kTwoPi * std::round(d / kTwoPi);
    if (std::abs(std::abs(d) - std::numbers::pi) < 0.1 * std::numbers::pi) amb = true;
    out[i] = out[i - 1] + d;
  }
  if (ambiguous) *ambiguous = amb;
  return out;
}

CSeries c_coefficients(const std::vector<double>& t, const std::vector<SolitonParams>& sigma,
                       int dim, double lambda, double h, const Potential* potential, double period) {
  if (t.size() != sigma.size()) throw std::invalid_argument("time and parameter series differ in length");
  if (t.size() < 3) throw std::invalid_argument("c-coefficients need at least three samples");
  if (lambda != 0.0 && potential == nullptr)
    throw std::invalid_argument("c-coefficients with lambda > 0 need the potential");
  const int n = dim;
  const std::size_t len = t.size();

  std::vector<double> gam(len);
  for (std::size_t i = 0; i < len; ++i) gam[i] = sigma[i].gamma;
  CSeries out;
  gam = unwrap_phase(gam, &out.unwrap_ambiguous);

  std::vector<Vec3> a(len);
  a[0] = sigma[0].a;
  for (std::size_t i = 1; i < len; ++i)
    for (int d = 0; d < n; ++d) {
      double step = sigma[i].a[d] - sigma[i - 1].a[d];
      if (period > 0.0) step = wrap_centered(step, period);
      a[i][d] = a[i - 1][d] + step;
    }

  for (std::size_t i = 1; i + 1 < len; ++i) {
    const double span = t[i + 1] - t[i - 1];
    const auto& s = sigma[i];
    Vec3 adot{0.0, 0.0, 0.0}, vdot{0.0, 0.0, 0.0};
    for (int d = 0; d < n; ++d) {
      adot[d] = (a[i + 1][d] - a[i - 1][d]) / span;
      vdot[d] = (sigma[i + 1].v[d] - sigma[i - 1].v[d]) / span;
    }
    const double gdot = (gam[i + 1] - gam[i - 1]) / span;
    const double mudot = (sigma[i + 1].mu - sigma[i - 1].mu) / span;

    double vh = 0.0;
    Vec3 grad{0.0, 0.0, 0.0};
    if (lambda != 0.0) {
      Vec3 y{0.0, 0.0, 0.0};
      for (int d = 0; d < n; ++d) y[d] = h * s.a[d];
      const auto p = potential->eval(y);
      vh = p.value;
      for (int d = 0; d < n; ++d) grad[d] = h * p.gradient[d];
    }
    CCoefficients c;
    c.t = t[i];
    c.c.resize(2 * n + 2);
    for (int d = 0; d < n; ++d) {
      c.c[d] = adot[d] - s.v[d];
      c.c[n + d] = -0.5 * vdot[d] - lambda * grad[d];
    }
    c.c[2 * n] = s.mu - 0.25 * dot(s.v, s.v, n) + 0.5 * dot(adot, s.v, n) - lambda * vh - gdot;
    c.c[2 * n + 1] = -mudot;
    for (double v : c.c) c.cmax = std::max(c.cmax, std::abs(v));
    out.values.push_back(std::move(c));
  }
  return out;
}

double action_energy(const ComplexVec& u, double mu, double s, const Spectral& spectral) {
  const GridSpec& grid = spectral.grid();
  ComplexVec hat = u;
  spectral.fft().forward(hat);
  const auto& k2 = spectral.k_squared();
  double kin = 0.0;
  for (std::size_t f = 0; f < hat.size(); ++f) kin += k2[f] * std::norm(hat[f]);
  kin *= grid.cell_volume() / static_cast<double>(hat.size());
  double mass = 0.0, nl = 0.0;
  for (const auto& z : u) {
    const double a2 = std::norm(z);
    mass += a2;
    nl += std::pow(a2, 0.5 * (s + 2.0));
  }
  mass *= grid.cell_volume();
  nl *= grid.cell_volume() / (s + 2.0);
  return 0.5 * (kin + mu * mass) - nl;
}

double lyapunov(const ComplexVec& psi, const SolitonParams& sigma, const ProfileFamily& family,
                const Spectral& spectral) {
  // ℰ_μ(T⁻¹ψ) = H₀(ψ) + ½(¼|v|² + μ)‖ψ‖² - ½ v·⟨iψ, ∇ψ⟩, which avoids
  // undoing the boost on a periodic grid.
  const GridSpec& grid = family.grid();
  const int n = grid.dim;
  const double s = family.nonlinearity();
  const double mu = sigma.mu;
  const double v2 = dot(sigma.v, sigma.v, n);
  const double e_psi_rest = action_energy(psi, 0.0, s, spectral);  // H₀(ψ)
  const double norm2 = l2_squared(psi, grid);
  ComplexVec ipsi = psi;
  for (auto& z : ipsi) z *= Complex(0.0, 1.0);
  double vp = 0.0;
  for (int d = 0; d < n; ++d) vp += sigma.v[d] * inner(ipsi, spectral.derivative(psi, d), grid);
  const double e_u = e_psi_rest + 0.5 * (0.25 * v2 + mu) * norm2 - 0.5 * vp;
  const ComplexVec eta = to_complex(family.profile_at(mu, {0.0, 0.0, 0.0}));
  return e_u - action_energy(eta, mu, s, spectral);
}

TrackResult evolve_and_track(const NlsSolver& solver, WaveField& w, const ProfileFamily& family,
                             const SolitonParams& guess, const Potential* potential,
                             const TrackOptions& options) {
  if (options.stride < 1) throw std::invalid_argument("tracking stride must be positive");
  const Spectral& spectral = solver.spectral();
  const int n = solver.grid().dim;
  TrackResult out;
  SolitonParams next = guess;
  const double dt_track = options.stride * solver.config().dt;

  auto track = [&]() {
    try {
      auto dec = project(w.psi, next, family, spectral, options.project);
      TrackRecord r;
      r.t = w.t;
      r.sigma = dec.sigma;
      r.wH1 = dec.wH1;
      r.cmax = std::numeric_limits<double>::quiet_NaN();
      r.lyapunov = lyapunov(w.psi, dec.sigma, family, spectral);
      r.newton_iters = dec.iterations;
      r.converged = dec.converged;
      out.records.push_back(r);
      // Warm start: advance along the free soliton laws.
      next = dec.sigma;
      for (int d = 0; d < n; ++d) next.a[d] += next.v[d] * dt_track;
      next.gamma += (next.mu + 0.25 * dot(next.v, next.v, n)) * dt_track;
      return true;
    } catch (const TrackingLost& e) {
      out.lost = true;
      out.lost_time = w.t;
      out.lost_reason = e.what();
      return false;
    }
  };

  for (long k = 0; k <= options.steps; ++k) {
    if (options.diagnostics) out.trace.push_back(solver.diagnostics(w));
    if (k % options.stride == 0 && !track()) break;
    if (k == options.steps) break;
    solver.step(w);
  }

  if (out.records.size() >= 3) {
    std::vector<double> t;
    std::vector<SolitonParams> sig;
    for (const auto& r : out.records) {
      t.push_back(r.t);
      sig.push_back(r.sigma);
    }
    auto cs = c_coefficients(t, sig, n, solver.config().lambda, solver.config().h, potential,
                             solver.grid().length);
    out.unwrap_ambiguous = cs.unwrap_ambiguous;
    for (std::size_t i = 0; i < cs.values.size(); ++i) out.records[i + 1].cmax = cs.values[i].cmax;
  }
  return out;
}

void write_tracking_csv(const std::filesystem::path& path, const std::vector<TrackRecord>& records,
                        int dim) {
  static const char* axes[3] = {"x", "y", "z"};
  std::vector<std::string> cols{"t"};
  for (int d = 0; d < dim; ++d) cols.push_back(std::string("a") + axes[d]);
  for (int d = 0; d < dim; ++d) cols.push_back(std::string("v") + axes[d]);
  for (const char* c : {"gamma", "mu", "wH1", "cmax", "lyapunov", "newtonIters", "converged"})
    cols.emplace_back(c);
  io::CsvWriter csv(path, cols);
  std::vector<double> row;
  for (const auto& r : records) {
    row = {r.t};
    for (int d = 0; d < dim; ++d) row.push_back(r.sigma.a[d]);
    for (int d = 0; d < dim; ++d) row.push_back(r.sigma.v[d]);
    row.push_back(r.sigma.gamma);
    row.push_back(r.sigma.mu);
    row.push_back(r.wH1);
    row.push_back(r.cmax);
    row.push_back(r.lyapunov);
    row.push_back(r.newton_iters);
    row.push_back(r.converged ? 1.0 : 0.0);
    csv.row(row);
  }
}

}  // namespace solacc
