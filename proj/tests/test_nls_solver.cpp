#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "solacc/io.hpp"
#include "solacc/nls_solver.hpp"
#include "solacc/soliton.hpp"

using namespace solacc;
namespace fs = std::filesystem;

namespace {

double l2_distance(const ComplexVec& a, const ComplexVec& b, const GridSpec& g) {
  ComplexVec d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return std::sqrt(l2_squared(d, g));
}

// Smooth periodic potential on the PDE box with analytic gradient.
SampledPotential cosine_potential(const GridSpec& g, double amplitude, int mode) {
  const double k = 2.0 * std::numbers::pi * mode / g.length;
  return SampledPotential::from_function(g, [=](const Vec3& x) {
    PotentialSample p;
    p.value = amplitude * std::cos(k * x[0] + 0.3);
    p.gradient[0] = -amplitude * k * std::sin(k * x[0] + 0.3);
    return p;
  });
}

WaveField soliton_state(const GridSpec& g, double a, double v, double gamma, double mu) {
  CubicProfile1D fam(g);
  SolitonParams s;
  s.a = {a, 0.0, 0.0};
  s.v = {v, 0.0, 0.0};
  s.gamma = gamma;
  s.mu = mu;
  return WaveField{g, build_soliton(s, fam).field, 0.0};
}

ComplexVec evolve(const NlsSolver& solver, WaveField w, long steps) {
  solver.run(w, steps);
  return w.psi;
}

DiagnosticTrace traced_run(const NlsSolver& solver, WaveField w, long steps) {
  DiagnosticTrace trace;
  solver.run(w, steps, [&](const WaveField& x, long) { trace.push_back(solver.diagnostics(x)); });
  return trace;
}

}  // namespace

TEST_CASE("free soliton follows its exact parameter laws") {
  const GridSpec g{1, 60.0, 1024};
  SolverConfig cfg;
  cfg.dt = 1e-3;
  NlsSolver solver(g, cfg, SampledPotential::zero(g));
  const double a0 = -1.0, v = 1.0, g0 = 0.3, mu = 1.0;
  WaveField w = soliton_state(g, a0, v, g0, mu);
  solver.run(w, 1000);
  CHECK(w.t == doctest::Approx(1.0));
  const double t = 1.0;
  const auto exact = soliton_state(g, a0 + v * t, v, g0 + mu * t + 0.25 * v * v * t, mu);
  const double err = l2_distance(w.psi, exact.psi, g);
  CHECK(err <= 1e-6);

  // The remaining error is the splitting error alone: it drops fourfold with dt.
  SolverConfig half = cfg;
  half.dt = 0.5e-3;
  WaveField w2 = soliton_state(g, a0, v, g0, mu);
  NlsSolver(g, half, SampledPotential::zero(g)).run(w2, 2000);
  CHECK(err / l2_distance(w2.psi, exact.psi, g) == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("linear evolution in a constant potential is a global phase") {
  const GridSpec g{1, 2.0 * std::numbers::pi, 64};
  SolverConfig cfg;
  cfg.dt = 0.01;
  cfg.lambda = 0.5;
  cfg.nonlinear = false;
  const double c = 0.8;
  NlsSolver solver(g, cfg, SampledPotential::constant(g, c));
  WaveField w{g, ComplexVec(g.size()), 0.0};
  const int k = 3;
  for (std::size_t i = 0; i < g.size(); ++i) w.psi[i] = std::polar(1.0, k * g.position(i)[0]);
  solver.run(w, 250);
  double err = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Complex expected = std::polar(1.0, k * g.position(i)[0] - (k * k + cfg.lambda * c) * w.t);
    err = std::max(err, std::abs(w.psi[i] - expected));
  }
  CHECK(err < 1e-11);
}

TEST_CASE("second-order self-convergence in a smooth potential") {
  const GridSpec g{1, 40.0, 256};
  const auto pot = cosine_potential(g, 1.0, 2);
  const auto init = soliton_state(g, 0.0, 0.8, 0.0, 1.0);
  auto run_with = [&](double dt) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.lambda = 0.5;
    return evolve(NlsSolver(g, cfg, pot), init, std::lround(1.0 / dt));
  };
  const auto p1 = run_with(0.02), p2 = run_with(0.01), p4 = run_with(0.005);
  const double ratio = l2_distance(p1, p2, g) / l2_distance(p2, p4, g);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("charge quadrature and conservation") {
  const GridSpec g{1, 40.0, 256};
  NlsSolver solver(g, SolverConfig{}, SampledPotential::zero(g));
  CHECK(solver.charge(ComplexVec(g.size())) == 0.0);
  const auto w0 = soliton_state(g, 0.5, 1.0, 0.0, 1.7);
  CHECK(solver.charge(w0.psi) == doctest::Approx(2.0 * std::sqrt(1.7)).epsilon(1e-12));

  SolverConfig cfg;
  cfg.dt = 1e-3;
  cfg.lambda = 0.7;
  NlsSolver driven(g, cfg, cosine_potential(g, 1.0, 3));
  WaveField w = w0;
  const double q0 = driven.charge(w.psi);
  driven.run(w, 10000);
  CHECK(std::abs(driven.charge(w.psi) - q0) / q0 <= 1e-12);
}

TEST_CASE("hamiltonian against closed-form integrals") {
  const GridSpec g{1, 60.0, 1024};
  NlsSolver solver(g, SolverConfig{}, SampledPotential::zero(g));
  CHECK(solver.hamiltonian(ComplexVec(g.size())) == 0.0);
  // η = √2 sech x: ½∫η'² = 2/3, ¼∫η⁴ = 4/3.
  const auto w = soliton_state(g, 0.0, 0.0, 0.0, 1.0);
  CHECK(solver.hamiltonian(w.psi) == doctest::Approx(-2.0 / 3.0).epsilon(1e-11));

  // Plane wave of amplitude A and wavenumber k on a 2D box.
  const GridSpec g2{2, 2.0 * std::numbers::pi, 32};
  NlsSolver s2(g2, SolverConfig{}, SampledPotential::zero(g2));
  const double amp = 0.7;
  ComplexVec pw(g2.size());
  for (std::size_t i = 0; i < pw.size(); ++i) {
    const auto x = g2.position(i);
    pw[i] = std::polar(amp, 2.0 * x[0] + 1.0 * x[1]);
  }
  const double vol = g2.length * g2.length;
  const double expected = 0.5 * vol * amp * amp * 5.0 - vol * std::pow(amp, 4.0) / 4.0;
  CHECK(s2.hamiltonian(pw) == doctest::Approx(expected).epsilon(1e-12));

  // Potential energy term (λ/2)∫V|ψ|² with V constant.
  SolverConfig cfg;
  cfg.lambda = 0.4;
  NlsSolver s3(g2, cfg, SampledPotential::constant(g2, 2.0));
  CHECK(s3.hamiltonian(pw) - s2.hamiltonian(pw) == doctest::Approx(0.2 * 2.0 * amp * amp * vol).epsilon(1e-12));
}

TEST_CASE("hamiltonian drift is second order in dt") {
  const GridSpec g{1, 40.0, 256};
  const auto pot = cosine_potential(g, 1.0, 2);
  const auto init = soliton_state(g, 0.0, 0.8, 0.0, 1.0);
  auto drift = [&](double dt) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.lambda = 0.5;
    NlsSolver solver(g, cfg, pot);
    const double h0 = solver.hamiltonian(init.psi);
    double worst = 0.0;
    WaveField w = init;
    solver.run(w, std::lround(2.0 / dt),
               [&](const WaveField& x, long) { worst = std::max(worst, std::abs(solver.hamiltonian(x.psi) - h0)); });
    return worst;
  };
  const double ratio = drift(0.01) / drift(0.005);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("momentum and the Ehrenfest / potential-rate identities") {
  const GridSpec g{1, 60.0, 1024};
  NlsSolver free_solver(g, SolverConfig{}, SampledPotential::zero(g));
  CHECK(std::abs(free_solver.momentum(soliton_state(g, 0.0, 0.0, 0.0, 1.0).psi)[0]) < 1e-14);
  CHECK(free_solver.momentum(soliton_state(g, 1.0, 2.0, 0.2, 1.0).psi)[0] == doctest::Approx(2.0 * 2.0).epsilon(1e-10));

  // Constant potential: both sides of the potential-rate identity vanish.
  {
    SolverConfig cfg;
    cfg.lambda = 0.5;
    cfg.dt = 0.01;
    NlsSolver solver(g, cfg, SampledPotential::constant(g, 1.5));
    const auto trace = traced_run(solver, soliton_state(g, 0.0, 1.0, 0.0, 1.0), 100);
    for (const auto& d : trace) REQUIRE(d.potential_rate == 0.0);
    CHECK(potential_rate_residual(trace) < 1e-10);
    CHECK(ehrenfest_residual(trace, 1) < 1e-10);
  }

  const GridSpec gs{1, 40.0, 256};
  const auto pot = cosine_potential(gs, 1.0, 2);
  const auto init = soliton_state(gs, 0.0, 0.8, 0.0, 1.0);
  auto residuals = [&](double dt) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.lambda = 0.5;
    const auto trace = traced_run(NlsSolver(gs, cfg, pot), init, std::lround(2.0 / dt));
    return std::pair{ehrenfest_residual(trace, 1), potential_rate_residual(trace)};
  };
  const auto [e1, r1] = residuals(0.01);
  const auto [e2, r2] = residuals(0.005);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
  CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("gauge equivariance") {
  const GridSpec g{1, 40.0, 256};
  SolverConfig cfg;
  cfg.dt = 0.01;
  cfg.lambda = 0.5;
  NlsSolver solver(g, cfg, cosine_potential(g, 1.0, 2));
  const auto w = soliton_state(g, 0.0, 0.8, 0.0, 1.0);
  WaveField rotated = w;
  const Complex phase = std::polar(1.0, 1.1);
  for (auto& z : rotated.psi) z *= phase;
  auto a = evolve(solver, w, 200);
  const auto b = evolve(solver, rotated, 200);
  for (auto& z : a) z *= phase;
  CHECK(l2_distance(a, b, g) < 1e-12);
}

TEST_CASE("configuration checks, blow-up detection and persistence") {
  SolverConfig bad;
  bad.lambda = 1.5;
  CHECK_THROWS(bad.validate());
  bad = SolverConfig{};
  bad.h = 0.0;
  CHECK_THROWS(bad.validate());
  bad = SolverConfig{};
  bad.dt = -1.0;
  CHECK_THROWS(bad.validate());

  const GridSpec g{1, 20.0, 64};
  NlsSolver solver(g, SolverConfig{}, SampledPotential::zero(g));
  WaveField w{g, ComplexVec(g.size(), Complex(1.0, 0.0)), 0.0};
  w.psi[5] = Complex(std::nan(""), 0.0);
  try {
    solver.run(w, 10);
    FAIL("expected SolverBlowUp");
  } catch (const SolverBlowUp& e) {
    CHECK(e.step >= 1);
  }

  // A field box too small for L_ψ h.
  const GridSpec gv{1, 15.0, 64};
  const auto field = synthesize_spectral(CorrelationModel::gaussian_bell(1.0, 1.0), gv, 3);
  CHECK_THROWS(SampledPotential::from_field(field, g, 1.0));
  const auto sampled = SampledPotential::from_field(field, g, 0.5);
  CHECK(sampled.value[7] == doctest::Approx(field.value({0.5 * g.coordinate(7), 0.0, 0.0})).epsilon(1e-12));

  const auto dir = fs::temp_directory_path() / "solacc_unit";
  fs::create_directories(dir);
  const auto ws = soliton_state(g, 0.3, 1.0, 0.2, 1.0);
  WaveField saved = ws;
  saved.t = 2.5;
  write_checkpoint(dir / "state.ckpt", saved, 99);
  const auto back = read_checkpoint(dir / "state.ckpt");
  CHECK(back.t == 2.5);
  CHECK(back.grid.points == g.points);
  CHECK(back.grid.length == g.length);
  CHECK(back.psi == saved.psi);

  SolverConfig cfg;
  cfg.dt = 0.01;
  NlsSolver s2(g, cfg, SampledPotential::zero(g));
  const auto trace = traced_run(s2, ws, 5);
  write_trace_csv(dir / "trace.csv", trace, 1);
  const auto table = io::read_csv(dir / "trace.csv");
  CHECK(table.columns == std::vector<std::string>{"t", "charge", "hamiltonian", "px", "supAbsPsi"});
  CHECK(table.rows.size() == 6);
}
