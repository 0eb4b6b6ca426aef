#include "solacc/nls_solver.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "solacc/io.hpp"

namespace solacc {

void SolverConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("coupling lambda must lie in [0, 1]");
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("potential scale h must lie in (0, 1]");
  if (nonlinear && !(s > 0.0)) throw std::invalid_argument("nonlinearity exponent must be positive");
}

// ---------------------------------------------------------------------------

SampledPotential SampledPotential::zero(const GridSpec& grid) { return constant(grid, 0.0); }

SampledPotential SampledPotential::constant(const GridSpec& grid, double c) {
  SampledPotential p;
  p.grid = grid;
  p.value.assign(grid.size(), c);
  for (int d = 0; d < grid.dim; ++d) p.gradient[d].assign(grid.size(), 0.0);
  return p;
}

SampledPotential SampledPotential::from_function(
    const GridSpec& grid, const std::function<PotentialSample(const Vec3&)>& f) {
  SampledPotential p;
  p.grid = grid;
  p.value.resize(grid.size());
  for (int d = 0; d < grid.dim; ++d) p.gradient[d].resize(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto s = f(grid.position(j));
    p.value[j] = s.value;
    for (int d = 0; d < grid.dim; ++d) p.gradient[d][j] = s.gradient[d];
  }
  return p;
}

SampledPotential SampledPotential::from_field(const FieldRealization& field, const GridSpec& grid,
                                              double h) {
  const GridSpec& vg = field.grid();
  if (vg.dim != grid.dim) throw std::invalid_argument("field and PDE grid dimensions differ");
  const double span = grid.length * h;
  if (span > vg.length * (1.0 + 1e-12))
    throw std::invalid_argument("PDE box times h exceeds the potential box (L_psi*h > L_V)");

  const bool exact_box = std::abs(span - vg.length) <= 1e-12 * vg.length;
  if (!exact_box || grid.points < vg.points) {
    return from_function(grid, [&](const Vec3& x) {
      Vec3 y{0.0, 0.0, 0.0};
      for (int d = 0; d < grid.dim; ++d) y[d] = h * x[d];
      auto s = field.eval(y);
      for (int d = 0; d < grid.dim; ++d) s.gradient[d] *= h;
      return s;
    });
  }

  // Zero-padded Fourier resampling: exact values of the trigonometric
  // interpolant at the finer PDE grid.
  const std::size_t n = grid.size();
  const auto& c = field.coefficients();
  std::vector<std::size_t> target(c.size());
  std::vector<Vec3> kvec(c.size());
  for (std::size_t f = 0; f < c.size(); ++f) {
    auto idx = vg.unravel(f);
    std::size_t t = 0;
    for (int d = 0; d < vg.dim; ++d) {
      const int signed_i = idx[d] < vg.points / 2 ? idx[d] : idx[d] - vg.points;
      const int ti = signed_i >= 0 ? signed_i : signed_i + grid.points;
      t = t * grid.points + ti;
      kvec[f][d] = vg.wavenumber(idx[d]);
    }
    target[f] = t;
  }
  Fft fft(grid);
  auto synth = [&](auto&& mult) {
    ComplexVec w(n, Complex(0.0, 0.0));
    for (std::size_t f = 0; f < c.size(); ++f) w[target[f]] = c[f] * mult(f);
    fft.backward(w);
    RealVec out(n);
    const double scale = static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = w[j].real() * scale;
    return out;
  };
  SampledPotential p;
  p.grid = grid;
  p.value = synth([](std::size_t) { return Complex(1.0, 0.0); });
  for (int d = 0; d < grid.dim; ++d)
    p.gradient[d] = synth([&](std::size_t f) { return Complex(0.0, h * kvec[f][d]); });
  return p;
}

// ---------------------------------------------------------------------------

NlsSolver::NlsSolver(const GridSpec& grid, SolverConfig cfg, SampledPotential potential)
    : grid_(grid), cfg_(cfg), potential_(std::move(potential)), spectral_(grid) {
  cfg_.validate();
  if (!(potential_.grid == grid_)) throw std::invalid_argument("potential grid differs from the PDE grid");
  const auto& k2 = spectral_.k_squared();
  kinetic_.resize(k2.size());
  for (std::size_t f = 0; f < k2.size(); ++f) kinetic_[f] = std::polar(1.0, -k2[f] * cfg_.dt);
  if (cfg_.dealias) {
    dealias_mask_.assign(k2.size(), 1.0);
    const double kmax = std::numbers::pi / grid_.spacing();
    for (std::size_t f = 0; f < k2.size(); ++f) {
      auto idx = grid_.unravel(f);
      for (int d = 0; d < grid_.dim; ++d)
        if (std::abs(grid_.wavenumber(idx[d])) > 2.0 / 3.0 * kmax) dealias_mask_[f] = 0.0;
    }
  }
}

void NlsSolver::phase_substep(ComplexVec& psi, double tau) const {
  const double lam = cfg_.lambda;
  const double s = cfg_.s;
  const bool nl = cfg_.nonlinear;
  const auto& v = potential_.value;
  for (std::size_t j = 0; j < psi.size(); ++j) {
    double rate = lam * v[j];
    if (nl) rate -= std::pow(std::abs(psi[j]), s);
    psi[j] *= std::polar(1.0, -tau * rate);
  }
}

void NlsSolver::step(WaveField& w) const {
  phase_substep(w.psi, 0.5 * cfg_.dt);
  spectral_.fft().forward(w.psi);
  for (std::size_t f = 0; f < w.psi.size(); ++f) w.psi[f] *= kinetic_[f];
  if (cfg_.dealias)
    for (std::size_t f = 0; f < w.psi.size(); ++f) w.psi[f] *= dealias_mask_[f];
  spectral_.fft().backward(w.psi);
  phase_substep(w.psi, 0.5 * cfg_.dt);
  w.t += cfg_.dt;
  ++steps_taken_;
  for (const auto& z : w.psi) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) || std::abs(z) > 1e150) {
      std::ostringstream os;
      os << "non-finite wave field at step " << steps_taken_ << " (t=" << w.t << ")";
      throw SolverBlowUp(os.str(), steps_taken_);
    }
  }
}

void NlsSolver::run(WaveField& w, long steps,
                    const std::function<void(const WaveField&, long)>& observer) const {
  if (!(w.grid == grid_)) throw std::invalid_argument("wave field grid differs from the solver grid");
  if (observer) observer(w, 0);
  for (long k = 1; k <= steps; ++k) {
    step(w);
    if (observer) observer(w, k);
  }
}

double NlsSolver::charge(const ComplexVec& psi) const { return 0.5 * l2_squared(psi, grid_); }

double NlsSolver::hamiltonian(const ComplexVec& psi) const {
  ComplexVec hat = psi;
  spectral_.fft().forward(hat);
  const auto& k2 = spectral_.k_squared();
  double kin = 0.0;
  for (std::size_t f = 0; f < hat.size(); ++f) kin += k2[f] * std::norm(hat[f]);
  kin *= grid_.cell_volume() / static_cast<double>(hat.size());
  double pot = 0.0, nl = 0.0;
  const double s = cfg_.s;
  for (std::size_t j = 0; j < psi.size(); ++j) {
    const double a2 = std::norm(psi[j]);
    pot += potential_.value[j] * a2;
    if (cfg_.nonlinear) nl += std::pow(a2, 0.5 * (s + 2.0));
  }
  pot *= grid_.cell_volume();
  nl *= grid_.cell_volume() / (s + 2.0);
  return 0.5 * kin + 0.5 * cfg_.lambda * pot - nl;
}

Vec3 NlsSolver::momentum(const ComplexVec& psi) const {
  Vec3 p{0.0, 0.0, 0.0};
  ComplexVec ipsi = psi;
  for (auto& z : ipsi) z *= Complex(0.0, 1.0);
  for (int d = 0; d < grid_.dim; ++d) p[d] = inner(ipsi, spectral_.derivative(psi, d), grid_);
  return p;
}

DiagnosticSample NlsSolver::diagnostics(const WaveField& w) const {
  DiagnosticSample s;
  s.t = w.t;
  s.charge = charge(w.psi);
  s.hamiltonian = hamiltonian(w.psi);
  const double dv = grid_.cell_volume();
  ComplexVec ipsi = w.psi;
  for (auto& z : ipsi) z *= Complex(0.0, 1.0);
  for (int d = 0; d < grid_.dim; ++d) {
    ComplexVec g = spectral_.derivative(w.psi, d);
    s.momentum[d] = inner(ipsi, g, grid_);
    double f = 0.0, rate = 0.0;
    const auto& gv = potential_.gradient[d];
    for (std::size_t j = 0; j < g.size(); ++j) {
      f += gv[j] * std::norm(w.psi[j]);
      rate += gv[j] * (ipsi[j].real() * g[j].real() + ipsi[j].imag() * g[j].imag());
    }
    s.force[d] = -cfg_.lambda * f * dv;
    s.potential_rate += rate * dv;
  }
  double pe = 0.0, sup = 0.0;
  for (std::size_t j = 0; j < w.psi.size(); ++j) {
    const double a2 = std::norm(w.psi[j]);
    pe += potential_.value[j] * a2;
    sup = std::max(sup, a2);
  }
  s.potential_energy = 0.5 * pe * dv;
  s.sup_abs = std::sqrt(sup);
  return s;
}

// ---------------------------------------------------------------------------

double ehrenfest_residual(const DiagnosticTrace& trace, int dim) {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < trace.size(); ++i) {
    const double span = trace[i + 1].t - trace[i - 1].t;
    for (int d = 0; d < dim; ++d) {
      const double dp = (trace[i + 1].momentum[d] - trace[i - 1].momentum[d]) / span;
      worst = std::max(worst, std::abs(dp - trace[i].force[d]));
    }
  }
  return worst;
}

double potential_rate_residual(const DiagnosticTrace& trace) {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < trace.size(); ++i) {
    const double span = trace[i + 1].t - trace[i - 1].t;
    const double de = (trace[i + 1].potential_energy - trace[i - 1].potential_energy) / span;
    worst = std::max(worst, std::abs(de - trace[i].potential_rate));
  }
  return worst;
}

void write_trace_csv(const std::filesystem::path& path, const DiagnosticTrace& trace, int dim) {
  std::vector<std::string> cols{"t", "charge", "hamiltonian"};
  const char* names[3] = {"px", "py", "pz"};
  for (int d = 0; d < dim; ++d) cols.emplace_back(names[d]);
  cols.emplace_back("supAbsPsi");
  io::CsvWriter csv(path, cols);
  std::vector<double> row;
  for (const auto& s : trace) {
    row = {s.t, s.charge, s.hamiltonian};
    for (int d = 0; d < dim; ++d) row.push_back(s.momentum[d]);
    row.push_back(s.sup_abs);
    csv.row(row);
  }
}

void write_checkpoint(const std::filesystem::path& path, const WaveField& w, std::uint64_t seed) {
  io::EnvelopeHeader h;
  h.dim = w.grid.dim;
  h.points = w.grid.points;
  h.length = w.grid.length;
  h.seed = seed;
  h.reserved = w.t;
  RealVec payload;
  payload.reserve(2 * w.psi.size());
  for (const auto& z : w.psi) {
    payload.push_back(z.real());
    payload.push_back(z.imag());
  }
  io::write_envelope(path, h, payload);
}

WaveField read_checkpoint(const std::filesystem::path& path) {
  auto env = io::read_envelope(path);
  WaveField w;
  w.grid = GridSpec{env.header.dim, env.header.length, env.header.points};
  w.grid.validate();
  w.t = env.header.reserved;
  if (env.payload.size() != 2 * w.grid.size()) throw std::runtime_error("checkpoint size mismatch");
  w.psi.resize(w.grid.size());
  for (std::size_t j = 0; j < w.psi.size(); ++j) w.psi[j] = Complex(env.payload[2 * j], env.payload[2 * j + 1]);
  return w;
}

}  // namespace solacc
