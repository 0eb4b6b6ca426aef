#include "solacc/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include "solacc/io.hpp"
#include "solacc/seed.hpp"
#include "solacc/tracker.hpp"

namespace solacc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

FieldRealization make_field(const ExperimentConfig& e, const GridSpec& grid) {
  const std::uint64_t seed = derive_seed(e.seed, "field", 0);
  switch (e.method) {
    case SynthesisMethod::Spectral: return synthesize_spectral(e.corr, grid, seed);
    case SynthesisMethod::MovingAverage: return synthesize_moving_average(e.corr, grid, seed);
    case SynthesisMethod::RandomFourier: break;
  }
  throw std::invalid_argument("this experiment needs a grid field (spectral or moving-average)");
}

std::unique_ptr<ProfileFamily> make_family(int dim, double s, const GridSpec& grid, double mu) {
  if (dim == 1 && s == 2.0) return std::make_unique<CubicProfile1D>(grid);
  return std::make_unique<GridProfile>(s, grid, mu);
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd to_eigen(const Vec3& v, int dim) {
  Eigen::VectorXd out(dim);
  for (int d = 0; d < dim; ++d) out[d] = v[d];
  return out;
}

// --- individual experiments -------------------------------------------------

json run_synth_field(const ExperimentConfig& e, const fs::path& out, std::ostream& log) {
  std::vector<FieldRealization> fields;
  for (int i = 0; i < e.realizations; ++i) {
    const std::uint64_t seed = derive_seed(e.seed, "field", static_cast<std::uint64_t>(i));
    fields.push_back(e.method == SynthesisMethod::Spectral ? synthesize_spectral(e.corr, e.field_grid, seed)
                                                           : synthesize_moving_average(e.corr, e.field_grid, seed));
  }
  fields.front().dump(out / "field.bin");
  write_json(out / "field.json", fields.front().metadata());
  json summary{{"field", fields.front().metadata()}};

  if (e.realizations > 1) {
    const double dx = e.field_grid.spacing();
    const int max_lag = std::min(e.field_grid.points / 4,
                                 static_cast<int>(std::ceil(e.corr.support_radius() / 3.0 / dx)) + 1);
    std::vector<int> lags;
    for (int l = 0; l <= max_lag; ++l) lags.push_back(l);
    const auto report = empirical_correlation(fields, lags);
    io::CsvWriter csv(out / "correlation.csv", {"lag", "estimate", "stderr", "expected"});
    for (const auto& est : report.estimates) {
      const double row[] = {est.lag, est.mean, est.stderr_, 0.25 * analytic_R(e.corr, est.lag).value};
      csv.row(row);
    }
    summary["realizations"] = report.realizations;
    summary["tooFewRealizations"] = report.too_few_realizations;
    if (report.too_few_realizations) log << "warning: fewer than 100 realizations; estimate is noisy\n";
  }
  return summary;
}

json run_profile(const ExperimentConfig& e, const fs::path& out, std::ostream&) {
  const Profile p = (e.dim == 1 && e.s == 2.0) ? profile_1d_cubic(e.sigma.mu, e.pde_grid)
                                               : profile_petviashvili(e.sigma.mu, e.s, e.pde_grid);
  write_profile_cache(out / "profile", p);
  const auto family = make_family(e.dim, e.s, e.pde_grid, e.sigma.mu);
  const auto z = zero_mode_residuals(*family, e.sigma.mu);
  json zm{{"translation", z.translation}, {"gauge", z.gauge}, {"boostRatio", z.boost_ratio},
          {"boostParallelResidual", z.boost_parallel_residual}, {"boostFactor", z.boost_factor},
          {"scalingRatio", z.scaling_ratio}};
  write_json(out / "zero_modes.json", zm);
  if (p.mass_prime <= 0.0) throw ExperimentFailure("A4 violated: m'(mu) <= 0 for the computed profile");
  return {{"mass", p.mass}, {"massPrime", p.mass_prime}, {"residual", p.residual},
          {"iterations", p.iterations}, {"zeroModes", zm}};
}

json run_evolve_track(const ExperimentConfig& e, const fs::path& out, std::ostream& log) {
  json summary;
  std::optional<FieldRealization> field;
  SampledPotential potential = SampledPotential::zero(e.pde_grid);
  if (e.solver.lambda > 0.0) {
    field.emplace(make_field(e, e.field_grid));
    potential = SampledPotential::from_field(*field, e.pde_grid, e.solver.h);
    summary["field"] = field->metadata();
  }
  const auto family = make_family(e.dim, e.s, e.pde_grid, e.sigma.mu);
  NlsSolver solver(e.pde_grid, e.solver, std::move(potential));
  auto built = build_soliton(e.sigma, *family);
  if (built.edge_warning) log << "warning: box half-width below 6/sqrt(mu); soliton tails wrap around\n";
  WaveField w{e.pde_grid, std::move(built.field), 0.0};

  TrackOptions opt = e.tracking;
  opt.steps = std::lround(e.pde_horizon / e.solver.dt);
  const auto result = evolve_and_track(solver, w, *family, e.sigma, field ? &*field : nullptr, opt);
  write_tracking_csv(out / "tracking.csv", result.records, e.dim);
  if (!result.trace.empty()) write_trace_csv(out / "trace.csv", result.trace, e.dim);
  write_checkpoint(out / "final.ckpt", w, e.seed);

  double cmax = 0.0, wmax = 0.0;
  for (const auto& r : result.records) {
    if (std::isfinite(r.cmax)) cmax = std::max(cmax, r.cmax);
    wmax = std::max(wmax, r.wH1);
  }
  summary["supC"] = cmax;
  summary["supWH1"] = wmax;
  summary["records"] = result.records.size();
  summary["unwrapAmbiguous"] = result.unwrap_ambiguous;
  summary["trackingLost"] = result.lost;
  if (result.lost)
    throw ExperimentFailure("tracking lost at t = " + io::format_number(result.lost_time) + ": " + result.lost_reason);
  return summary;
}

json run_compare(const ExperimentConfig& e, const fs::path& out, std::ostream& log) {
  const FieldRealization field = make_field(e, e.field_grid);
  const auto res = compare_soliton_classical(field, e.compare);
  io::CsvWriter csv(out / "compare.csv", {"tbar", "positionError", "velocityError"});
  for (std::size_t i = 0; i < res.tbar.size(); ++i) {
    const double row[] = {res.tbar[i], res.position_error[i], res.velocity_error[i]};
    csv.row(row);
  }
  if (res.outside_window) log << "warning: horizon lies outside the C|log h|/lambda window\n";
  json summary{{"field", field.metadata()},
               {"supPositionError", res.sup_position_error},
               {"supVelocityError", res.sup_velocity_error},
               {"truncated", res.truncated},
               {"outsideWindow", res.outside_window},
               {"note", res.note}};
  write_json(out / "compare.json", summary);
  if (res.truncated) throw ExperimentFailure(res.note);
  return summary;
}

json run_ensemble_experiment(const ExperimentConfig& e, const fs::path& out, std::ostream& log) {
  const auto res = run_ensemble(e.ensemble);
  write_ensemble_csv(out / "ensemble.csv", res.summary);
  std::vector<double> t, y, se;
  double max_drift = 0.0;
  for (const auto& r : res.summary) {
    t.push_back(r.tbar);
    y.push_back(r.dir_autocorr);
    se.push_back(r.se_dir_autocorr);
    max_drift = std::max(max_drift, std::abs(r.mean_speed_drift));
  }
  const auto fit = fit_exponential_rate(t, y, se, 0.05);
  json summary{{"members", res.members.size()},
               {"failures", res.failures},
               {"maxMeanSpeedDrift", max_drift},
               {"fitRate", fit.rate},
               {"fitCI", {fit.ci_low, fit.ci_high}}};
  if (!res.sup_potential.empty()) {
    summary["supPotential"] = *std::max_element(res.sup_potential.begin(), res.sup_potential.end());
    summary["maxEnergyDrift"] = *std::max_element(res.max_energy_drift.begin(), res.max_energy_drift.end());
  }
  const double speed = norm(e.v0, e.dim);
  if (e.dim >= 2) {
    const DiffusionLaw law(e.corr, e.dim);
    summary["predictedRate"] = law.autocorrelation_rate(speed);
    write_json(out / "diffusion.json", diffusion_report(law, speed, {fit.rate}, {{fit.ci_low, fit.ci_high}}));
  }
  write_json(out / "ensemble.json", summary);
  if (res.failures > 0) log << "warning: " << res.failures << " members produced non-finite states\n";
  return summary;
}

json run_spatial_msd(const ExperimentConfig& e, const fs::path& out, std::ostream& log) {
  const auto res = run_ensemble(e.ensemble);
  if (res.members.size() < 2) throw ExperimentFailure("fewer than two ensemble members succeeded");
  const DiffusionLaw law(e.corr, e.dim);
  const double speed = norm(e.v0, e.dim);
  const auto msd = spatial_msd_test(res.members, e.dim, law.msd_slope(speed), e.t0_fraction, e.target_ci);
  write_msd_csv(out / "msd.csv", msd);
  std::vector<Eigen::VectorXd> positions;
  for (const auto& m : res.members) positions.push_back(to_eigen(m.back().x, e.dim) - to_eigen(m.front().x, e.dim));
  const auto chi = chi_square_position_test(positions, law.spatial_tensor(speed), msd.t.back(), e.bins, e.level);
  write_json(out / "diffusion.json", diffusion_report(law, speed, {msd.slope}, {{msd.ci_low, msd.ci_high}}));
  if (msd.too_few_members) log << "warning: ensemble too small for the target confidence interval\n";
  json summary{{"members", res.members.size()},
               {"failures", res.failures},
               {"slope", msd.slope},
               {"slopeCI", {msd.ci_low, msd.ci_high}},
               {"predictedSlope", msd.predicted},
               {"relativeError", msd.relative_error},
               {"tooFewMembers", msd.too_few_members},
               {"chiSquare", {{"statistic", chi.statistic}, {"dof", chi.dof}, {"pValue", chi.p_value}, {"pass", chi.pass}}}};
  write_json(out / "spatial.json", summary);
  return summary;
}

json run_diffusion_theory(const ExperimentConfig& e, const fs::path& out, std::ostream&) {
  const DiffusionLaw law(e.corr, e.dim);
  const double k = norm(e.v0, e.dim);
  json report = diffusion_report(law, k, {}, {});
  report["DmatrixAtV0"] = matrix_json(diffusion_matrix(e.corr, to_eigen(e.v0, e.dim)));
  if (e.dim >= 3) {
    const auto cell = cell_problem(law, k);
    report["cellResidual"] = cell.residual;
  }
  write_json(out / "diffusion.json", report);
  return report;
}

json run_sphere_sim(const ExperimentConfig& e, const fs::path& out, std::ostream&) {
  const DiffusionLaw law(e.corr, e.dim);
  const Eigen::VectorXd v0 = to_eigen(e.v0, e.dim);
  const auto res = simulate_sphere_diffusion(law, v0, e.sphere);
  io::CsvWriter csv(out / "sphere.csv", {"t", "dirAutocorr", "seDirAutocorr", "msd", "seMsd"});
  for (std::size_t i = 0; i < res.t.size(); ++i) {
    const double row[] = {res.t[i], res.autocorr[i], res.autocorr_se[i], res.msd[i], res.msd_se[i]};
    csv.row(row);
  }
  const double k = v0.norm();
  write_json(out / "diffusion.json", diffusion_report(law, k, {res.fit.rate}, {{res.fit.ci_low, res.fit.ci_high}}));
  return {{"fitRate", res.fit.rate},
          {"fitCI", {res.fit.ci_low, res.fit.ci_high}},
          {"predictedRate", law.autocorrelation_rate(k)},
          {"maxSpeedError", res.max_speed_error}};
}

}  // namespace

json run_experiment(const ExperimentConfig& e, const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  switch (e.kind) {
    case ExperimentKind::SynthField: return run_synth_field(e, out, log);
    case ExperimentKind::Profile: return run_profile(e, out, log);
    case ExperimentKind::EvolveTrack: return run_evolve_track(e, out, log);
    case ExperimentKind::Compare: return run_compare(e, out, log);
    case ExperimentKind::Ensemble: return run_ensemble_experiment(e, out, log);
    case ExperimentKind::DiffusionTheory: return run_diffusion_theory(e, out, log);
    case ExperimentKind::SphereSim: return run_sphere_sim(e, out, log);
    case ExperimentKind::SpatialMsd: return run_spatial_msd(e, out, log);
  }
  throw std::logic_error("unhandled experiment kind");
}

int execute(const Config& input, const RunOptions& options, std::ostream& log) {
  Config config = input;
  if (options.threads) config.set("threads", std::to_string(*options.threads));
  if (options.seed) config.set("seed", std::to_string(*options.seed));

  ExperimentConfig e;
  try {
    e = ExperimentConfig::from(config);
  } catch (const std::exception& err) {
    log << "configuration error: " << err.what() << "\n";
    return kExitValidation;
  }
  const auto report = validate(e);
  if (options.validate_only) {
    log << report.text();
    return report.ok() ? kExitSuccess : kExitValidation;
  }
  for (const auto& c : report.checks)
    if (c.verdict == Check::Verdict::Warn) log << "warning: " << c.detail << "\n";
  if (!report.ok()) {
    log << "validation failed: " << report.first_failure() << "\n";
    return kExitValidation;
  }

  const fs::path out = options.out.empty() ? fs::path("out") : options.out;
  json manifest{{"schemaVersion", kManifestSchemaVersion},
                {"tool", "solacc"},
                {"version", kToolVersion},
                {"experiment", to_string(e.kind)},
                {"config", e.raw.resolved()},
                {"seeds", {{"base", e.seed}, {"rule", "splitmix64(base ^ fnv1a(tag) ^ splitmix64(index)); ensemble member i uses base + i"}}},
                {"validation", report.json()}};
  int code = kExitSuccess;
  const auto start = std::chrono::steady_clock::now();
  try {
    fs::create_directories(out);
    manifest["results"] = run_experiment(e, out, log);
    manifest["status"] = "ok";
  } catch (const std::exception& err) {
    log << "runtime failure: " << err.what() << "\n";
    manifest["status"] = "failed";
    manifest["error"] = err.what();
    code = kExitRuntime;
  }
  manifest["wallSeconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["exitCode"] = code;
  try {
    fs::create_directories(out);
    write_json(out / "manifest.json", manifest);
    std::ofstream(out / "config.resolved") << e.raw.dump_resolved();
  } catch (const std::exception& err) {
    log << "cannot write manifest: " << err.what() << "\n";
    return kExitRuntime;
  }
  return code;
}

}  // namespace solacc
