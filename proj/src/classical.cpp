#include "solacc/classical.hpp"

#include <atomic>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <thread>

#include "solacc/io.hpp"
#include "solacc/nls_solver.hpp"
#include "solacc/tracker.hpp"

namespace solacc {

namespace {

struct Derivative {
  Vec3 da;
  Vec3 dv;
};

Derivative rhs(const Vec3& a, const Vec3& v, const Potential& field, double lambda, int n) {
  Derivative d{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  const Vec3 g = lambda != 0.0 ? field.gradient(a) : Vec3{0.0, 0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    d.da[i] = v[i];
    d.dv[i] = -2.0 * lambda * g[i];
  }
  return d;
}

bool finite_state(const ClassicalState& s, int n) {
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(s.a[i]) || !std::isfinite(s.v[i])) return false;
  return true;
}

}  // namespace

ClassicalState hamilton_step(const ClassicalState& s, const Potential& field, double lambda,
                             double dt) {
  const int n = field.dim();
  auto shifted = [&](const Vec3& base, const Vec3& inc, double f) {
    Vec3 r = base;
    for (int i = 0; i < n; ++i) r[i] += f * inc[i];
    return r;
  };
  const auto k1 = rhs(s.a, s.v, field, lambda, n);
  const auto k2 = rhs(shifted(s.a, k1.da, 0.5 * dt), shifted(s.v, k1.dv, 0.5 * dt), field, lambda, n);
  const auto k3 = rhs(shifted(s.a, k2.da, 0.5 * dt), shifted(s.v, k2.dv, 0.5 * dt), field, lambda, n);
  const auto k4 = rhs(shifted(s.a, k3.da, dt), shifted(s.v, k3.dv, dt), field, lambda, n);
  ClassicalState out = s;
  for (int i = 0; i < n; ++i) {
    out.a[i] += dt / 6.0 * (k1.da[i] + 2.0 * k2.da[i] + 2.0 * k3.da[i] + k4.da[i]);
    out.v[i] += dt / 6.0 * (k1.dv[i] + 2.0 * k2.dv[i] + 2.0 * k3.dv[i] + k4.dv[i]);
  }
  out.t += dt;
  return out;
}

double classical_energy(const ClassicalState& s, const Potential& field, double lambda) {
  const int n = field.dim();
  return 0.5 * dot(s.v, s.v, n) + 2.0 * lambda * field.value(s.a);
}

std::vector<ClassicalState> integrate_classical(ClassicalState s, const Potential& field,
                                                double lambda, double dt, long steps,
                                                long sample_every) {
  if (sample_every < 1) throw std::invalid_argument("sample_every must be positive");
  std::vector<ClassicalState> out;
  out.reserve(static_cast<std::size_t>(steps / sample_every + 2));
  out.push_back(s);
  for (long k = 1; k <= steps; ++k) {
    s = hamilton_step(s, field, lambda, dt);
    if (k % sample_every == 0 || k == steps) out.push_back(s);
  }
  return out;
}

std::vector<ScaledSample> rescale(const std::vector<ClassicalState>& traj, double lambda,
                                  const std::vector<double>& tbar, int dim, double time_exponent,
                                  double space_exponent) {
  if (traj.empty()) throw std::invalid_argument("empty trajectory");
  if (!(lambda > 0.0)) throw std::invalid_argument("rescaling needs lambda > 0");
  const double tscale = std::pow(lambda, -time_exponent);
  const double xscale = std::pow(lambda, space_exponent);
  std::vector<ScaledSample> out;
  std::size_t k = 0;
  for (double tb : tbar) {
    const double tm = tb * tscale;
    if (tm > traj.back().t * (1.0 + 1e-12) + 1e-12)
      throw std::invalid_argument("trajectory horizon is shorter than the requested rescaled time");
    while (k + 1 < traj.size() && traj[k + 1].t <= tm) ++k;
    ScaledSample s;
    s.tbar = tb;
    const auto& p = traj[k];
    if (k + 1 >= traj.size() || std::abs(tm - p.t) <= 1e-12 * std::max(1.0, tm)) {
      for (int d = 0; d < dim; ++d) {
        s.x[d] = xscale * p.a[d];
        s.v[d] = p.v[d];
      }
    } else {
      const auto& q = traj[k + 1];
      const double h = q.t - p.t;
      const double u = (tm - p.t) / h;
      const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
      const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
      for (int d = 0; d < dim; ++d) {
        s.x[d] = xscale * (h00 * p.a[d] + h10 * h * p.v[d] + h01 * q.a[d] + h11 * h * q.v[d]);
        s.v[d] = (1 - u) * p.v[d] + u * q.v[d];
      }
    }
    out.push_back(s);
  }
  return out;
}

std::vector<ScaledSample> rescale_kinetic(const std::vector<ClassicalState>& trajectory,
                                          double lambda, const std::vector<double>& tbar, int dim) {
  return rescale(trajectory, lambda, tbar, dim, 2.0, 2.0);
}

// ---------------------------------------------------------------------------

void EnsembleSpec::validate() const {
  if (count < 1) throw std::invalid_argument("ensemble needs at least one member");
  if (dim < 1 || dim > 3) throw std::invalid_argument("ensemble dimension must be 1..3");
  if (!(norm(v0, dim) > 0.0)) throw std::invalid_argument("initial velocity must be nonzero (|v0| != 0)");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in (0, 1]");
  if (!(horizon > 0.0) || !(dt > 0.0)) throw std::invalid_argument("horizon and dt must be positive");
  if (samples < 2) throw std::invalid_argument("at least two output samples are needed");
  if (threads < 1) throw std::invalid_argument("thread count must be positive");
  corr.validate();
}

double EnsembleSpec::micro_horizon() const { return horizon * std::pow(lambda, -time_exponent); }

GridSpec EnsembleSpec::field_grid() const {
  const double ell = corr.kind == CorrelationKind::GaussianBell ? corr.length : corr.kernel_radius;
  const double length = std::max(1.5 * norm(v0, dim) * micro_horizon(), 20.0 * ell);
  int m = 4;
  while (length / m > ell / points_per_length) m *= 2;
  return GridSpec{dim, length, m};
}

PotentialFactory make_potential_factory(const EnsembleSpec& spec) {
  switch (spec.method) {
    case SynthesisMethod::Spectral: {
      auto synth = std::make_shared<SpectralSynthesizer>(spec.corr, spec.field_grid());
      return [synth](std::uint64_t seed) -> std::unique_ptr<Potential> {
        return std::make_unique<SplinePotential>((*synth)(seed));
      };
    }
    case SynthesisMethod::MovingAverage: {
      const auto corr = spec.corr;
      const auto grid = spec.field_grid();
      return [corr, grid](std::uint64_t seed) -> std::unique_ptr<Potential> {
        return std::make_unique<SplinePotential>(synthesize_moving_average(corr, grid, seed));
      };
    }
    case SynthesisMethod::RandomFourier: {
      const auto corr = spec.corr;
      const int dim = spec.dim, features = spec.features;
      return [corr, dim, features](std::uint64_t seed) -> std::unique_ptr<Potential> {
        return std::make_unique<FourierFeatureField>(corr, dim, features, seed);
      };
    }
  }
  throw std::invalid_argument("unknown synthesis method");
}

EnsembleResult run_ensemble(const EnsembleSpec& spec) {
  spec.validate();
  return run_ensemble(spec, make_potential_factory(spec));
}

namespace {

struct MemberOutcome {
  std::vector<ScaledSample> samples;
  double sup_potential = 0.0;
  double max_energy_drift = 0.0;
};

std::optional<MemberOutcome> run_member(const EnsembleSpec& spec, const PotentialFactory& factory,
                                        std::uint64_t seed) {
  auto field = factory(seed);
  const int n = spec.dim;
  // Output times fall exactly on integration steps.
  const double t_out = spec.micro_horizon() / (spec.samples - 1);
  const long per_sample = std::max(1L, static_cast<long>(std::ceil(t_out / spec.dt - 1e-9)));
  const double dt = t_out / per_sample;

  MemberOutcome out;
  ClassicalState s;
  s.v = spec.v0;
  const double e0 = classical_energy(s, *field, spec.lambda);
  const double xscale = std::pow(spec.lambda, spec.space_exponent);
  const double tscale = std::pow(spec.lambda, spec.time_exponent);
  auto record = [&](const ClassicalState& st) {
    ScaledSample r;
    r.tbar = st.t * tscale;
    for (int d = 0; d < n; ++d) {
      r.x[d] = xscale * st.a[d];
      r.v[d] = st.v[d];
    }
    out.samples.push_back(r);
    const double v = field->value(st.a);
    out.sup_potential = std::max(out.sup_potential, std::abs(v));
    const double e = 0.5 * dot(st.v, st.v, n) + 2.0 * spec.lambda * v;
    out.max_energy_drift = std::max(out.max_energy_drift, std::abs(e - e0));
  };
  record(s);
  for (int i = 1; i < spec.samples; ++i) {
    for (long k = 0; k < per_sample; ++k) s = hamilton_step(s, *field, spec.lambda, dt);
    s.t = i * t_out;
    if (!finite_state(s, n)) return std::nullopt;
    record(s);
  }
  return out;
}

}  // namespace

EnsembleResult run_ensemble(const EnsembleSpec& spec, const PotentialFactory& factory) {
  spec.validate();
  std::vector<std::optional<MemberOutcome>> outcomes(spec.count);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next++; i < spec.count; i = next++) {
      try {
        outcomes[i] = run_member(spec, factory, spec.base_seed + static_cast<std::uint64_t>(i));
      } catch (const std::exception&) {
        outcomes[i] = std::nullopt;
      }
    }
  };
  const int nthreads = std::min(spec.threads, spec.count);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  EnsembleResult res;
  for (auto& o : outcomes) {
    if (!o) {
      ++res.failures;
      continue;
    }
    res.members.push_back(std::move(o->samples));
    res.sup_potential.push_back(o->sup_potential);
    res.max_energy_drift.push_back(o->max_energy_drift);
  }
  if (res.members.empty()) return res;

  const int n = spec.dim;
  const double speed0 = norm(spec.v0, n);
  Vec3 dir0{0.0, 0.0, 0.0};
  for (int d = 0; d < n; ++d) dir0[d] = spec.v0[d] / speed0;
  const double cnt = static_cast<double>(res.members.size());
  auto mean_se = [&](double sum, double sum2) {
    const double mean = sum / cnt;
    const double var = cnt > 1 ? std::max(0.0, (sum2 - cnt * mean * mean) / (cnt - 1.0)) : 0.0;
    return std::pair{mean, std::sqrt(var / cnt)};
  };
  for (int i = 0; i < spec.samples; ++i) {
    double s1 = 0, s2 = 0, d1 = 0, d2 = 0, m1 = 0, m2 = 0, mx = 0;
    for (const auto& mem : res.members) {
      const auto& p = mem[i];
      const auto& p0 = mem[0];
      const double speed = norm(p.v, n);
      const double drift = (speed - speed0) / speed0;
      const double cosang = dot(p.v, dir0, n) / speed;
      double msd = 0.0;
      for (int d = 0; d < n; ++d) msd += (p.x[d] - p0.x[d]) * (p.x[d] - p0.x[d]);
      s1 += drift;
      s2 += drift * drift;
      d1 += cosang;
      d2 += cosang * cosang;
      m1 += msd;
      m2 += msd * msd;
      mx = std::max(mx, std::abs(drift));
    }
    EnsembleSummaryRow row;
    row.tbar = res.members.front()[i].tbar;
    std::tie(row.mean_speed_drift, row.se_speed_drift) = mean_se(s1, s2);
    std::tie(row.dir_autocorr, row.se_dir_autocorr) = mean_se(d1, d2);
    std::tie(row.msd, row.se_msd) = mean_se(m1, m2);
    row.max_abs_speed_drift = mx;
    res.summary.push_back(row);
  }
  return res;
}

void write_ensemble_csv(const std::filesystem::path& path, const std::vector<EnsembleSummaryRow>& rows) {
  io::CsvWriter csv(path, {"tbar", "meanSpeedDrift", "dirAutocorr", "msd", "seSpeedDrift",
                           "seDirAutocorr", "seMsd"});
  for (const auto& r : rows) {
    const double vals[] = {r.tbar, r.mean_speed_drift, r.dir_autocorr, r.msd,
                           r.se_speed_drift, r.se_dir_autocorr, r.se_msd};
    csv.row(vals);
  }
}

void write_member_csv(const std::filesystem::path& path, const std::vector<ScaledSample>& samples, int dim) {
  static const char* axes[3] = {"x", "y", "z"};
  std::vector<std::string> cols{"tbar"};
  for (int d = 0; d < dim; ++d) cols.push_back(std::string("x") + axes[d]);
  for (int d = 0; d < dim; ++d) cols.push_back(std::string("v") + axes[d]);
  io::CsvWriter csv(path, cols);
  std::vector<double> row;
  for (const auto& s : samples) {
    row = {s.tbar};
    for (int d = 0; d < dim; ++d) row.push_back(s.x[d]);
    for (int d = 0; d < dim; ++d) row.push_back(s.v[d]);
    csv.row(row);
  }
}

// ---------------------------------------------------------------------------

ComparisonResult compare_soliton_classical(const FieldRealization& field, const ComparisonSpec& spec) {
  if (!(spec.h > 0.0 && spec.h <= 1.0)) throw std::invalid_argument("h must lie in (0, 1]");
  if (!(spec.horizon > 0.0)) throw std::invalid_argument("comparison horizon must be positive");
  const GridSpec& vg = field.grid();
  const int n = vg.dim;
  GridSpec pde{n, vg.length / spec.h, spec.points};
  if (pde.points == 0) {
    pde.points = 4;
    while (pde.length / pde.points > 0.1) pde.points *= 2;
  }
  pde.validate();

  std::unique_ptr<ProfileFamily> family;
  if (n == 1 && spec.s == 2.0)
    family = std::make_unique<CubicProfile1D>(pde);
  else
    family = std::make_unique<GridProfile>(spec.s, pde, spec.sigma0.mu);

  SolverConfig cfg;
  cfg.dt = spec.dt;
  cfg.lambda = spec.lambda;
  cfg.h = spec.h;
  cfg.s = spec.s;
  NlsSolver solver(pde, cfg, SampledPotential::from_field(field, pde, spec.h));
  WaveField w{pde, build_soliton(spec.sigma0, *family).field, 0.0};

  TrackOptions topt;
  topt.stride = spec.stride;
  topt.steps = static_cast<long>(std::llround(spec.horizon / spec.h / spec.dt));
  auto tracked = evolve_and_track(solver, w, *family, spec.sigma0, &field, topt);

  ComparisonResult out;
  out.truncated = tracked.lost;
  if (tracked.lost) out.note = "tracking lost at t=" + std::to_string(tracked.lost_time) + ": " + tracked.lost_reason;
  const double window = spec.cbar * std::abs(std::log(spec.h)) / std::max(spec.lambda, 1e-300);
  out.outside_window = spec.horizon > window;

  // Classical particle with ã(0) = h a0, ṽ(0) = v0, sampled at the tracking times.
  ClassicalState cl;
  for (int d = 0; d < n; ++d) {
    cl.a[d] = spec.h * spec.sigma0.a[d];
    cl.v[d] = spec.sigma0.v[d];
  }
  const int sub = 4;
  const double dtbar = spec.h * spec.dt * spec.stride / sub;

  Vec3 abar_prev{0.0, 0.0, 0.0}, abar{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < tracked.records.size(); ++i) {
    const auto& r = tracked.records[i];
    // Continuous soliton centre in macroscopic units.
    for (int d = 0; d < n; ++d) {
      const double x = spec.h * r.sigma.a[d];
      abar[d] = i == 0 ? x : abar_prev[d] + wrap_centered(x - abar_prev[d], vg.length);
    }
    abar_prev = abar;
    if (i > 0)
      for (int k = 0; k < sub; ++k) cl = hamilton_step(cl, field, spec.lambda, dtbar);
    double ea = 0.0, ev = 0.0;
    for (int d = 0; d < n; ++d) {
      ea += (abar[d] - cl.a[d]) * (abar[d] - cl.a[d]);
      ev += (r.sigma.v[d] - cl.v[d]) * (r.sigma.v[d] - cl.v[d]);
    }
    out.tbar.push_back(spec.h * r.t);
    out.position_error.push_back(std::sqrt(ea));
    out.velocity_error.push_back(std::sqrt(ev));
    out.sup_position_error = std::max(out.sup_position_error, std::sqrt(ea));
    out.sup_velocity_error = std::max(out.sup_velocity_error, std::sqrt(ev));
  }
  return out;
}

}  // namespace solacc
