#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "solacc/diffusion.hpp"
#include "solacc/io.hpp"

using namespace solacc;

namespace {

const double kSqrtHalfPi = std::sqrt(0.5 * std::numbers::pi);

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(xs.size());
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Direct oracle: Cartesian Hessian of R(|x|) along the line s k̂, from values
// of R only (4th-order central differences), integrated by the trapezoid rule.
Eigen::MatrixXd line_hessian_oracle(const CorrelationModel& corr, const Eigen::VectorXd& k, double ds) {
  const int n = static_cast<int>(k.size());
  const Eigen::VectorXd khat = k / k.norm();
  auto R = [&](const Eigen::VectorXd& x) { return analytic_R(corr, x.norm()).value; };
  const double e = 1e-3, reach = corr.support_radius();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  for (double s = -reach; s <= reach + 1e-12; s += ds) {
    const Eigen::VectorXd x = s * khat;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Eigen::VectorXd ei = Eigen::VectorXd::Unit(n, i), ej = Eigen::VectorXd::Unit(n, j);
        // Mixed 4th-order stencil from the 1D weights (-1, 8, -8, 1)/12.
        const double w[4] = {-1.0, 8.0, -8.0, 1.0};
        const double o[4] = {2.0, 1.0, -1.0, -2.0};
        double h = 0.0;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) h += w[a] * w[b] * R(x + o[a] * e * ei + o[b] * e * ej);
        acc(i, j) += h / (144.0 * e * e) * ds;
      }
  }
  return -acc / (2.0 * k.norm());
}

Eigen::MatrixXd rotation2(double th) {
  Eigen::MatrixXd r(2, 2);
  r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  return r;
}

std::vector<ScaledSample> random_walk_member(std::mt19937_64& rng, int dim, double slope, int samples, double horizon) {
  // Brownian path with E|x(t)|² = slope t.
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ScaledSample> out;
  ScaledSample s;
  const double dt = horizon / (samples - 1);
  out.push_back(s);
  for (int i = 1; i < samples; ++i) {
    s.tbar = i * dt;
    for (int d = 0; d < dim; ++d) s.x[d] += std::sqrt(slope * dt / dim) * g(rng);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("diffusion matrix: closed form, oracle, scaling, rotation") {
  const auto gb = CorrelationModel::gaussian_bell(1.0, 1.0);
  const auto d = diffusion_matrix(gb, vec({1.0, 0.0}));
  CHECK(std::abs(d(0, 0)) < 1e-12);
  CHECK(std::abs(d(0, 1)) < 1e-12);
  CHECK(d(1, 1) == doctest::Approx(kSqrtHalfPi).epsilon(1e-10));
  CHECK(diffusion_matrix(gb, vec({2.0, 0.0}))(1, 1) == doctest::Approx(0.5 * kSqrtHalfPi).epsilon(1e-10));

  const auto k = vec({0.6, -0.8});
  CHECK((diffusion_matrix(gb, k) - line_hessian_oracle(gb, k, 1e-2)).cwiseAbs().maxCoeff() < 1e-7);
  const auto k3 = vec({0.3, 0.5, -0.9});
  const auto d3 = diffusion_matrix(gb, k3);
  CHECK((d3 - line_hessian_oracle(gb, k3, 1e-2)).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((d3 * k3).norm() < 1e-12);
  CHECK((d3 - d3.transpose()).norm() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d3);
  CHECK(es.eigenvalues()(0) > -1e-12);
  CHECK(es.eigenvalues()(1) == doctest::Approx(kSqrtHalfPi / k3.norm()).epsilon(1e-10));

  for (double th : {0.3, 1.1, 2.7}) {
    const auto r = rotation2(th);
    const Eigen::VectorXd kr = r * vec({1.3, 0.4});
    CHECK((diffusion_matrix(gb, kr) - r * diffusion_matrix(gb, vec({1.3, 0.4})) * r.transpose()).cwiseAbs().maxCoeff() <
          1e-10);
  }
  CHECK_THROWS(diffusion_matrix(gb, vec({0.0, 0.0})));

  // Compact kernel: transverse eigenvalue equals the scalar and the oracle.
  const auto ck = CorrelationModel::compact_kernel(1.0, 1.5, 3);
  const auto k1 = vec({0.0, 0.0, 1.2});
  const auto dc = diffusion_matrix(ck, k1);
  CHECK(dc(0, 0) == doctest::Approx(isotropic_scalar(ck, 1.2)).epsilon(1e-9));
  CHECK((dc - line_hessian_oracle(ck, k1, 2e-3)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(dc(0, 0) > 0.0);
}

TEST_CASE("isotropic scalar scaling") {
  CHECK(isotropic_scalar(CorrelationModel::gaussian_bell(1.0, 1.0), 1.0) == doctest::Approx(kSqrtHalfPi));
  CHECK(isotropic_scalar(CorrelationModel::gaussian_bell(2.0, 1.0), 1.0) == doctest::Approx(2.0 * kSqrtHalfPi));
  CHECK(isotropic_scalar(CorrelationModel::gaussian_bell(1.0, 2.0), 1.0) == doctest::Approx(0.5 * kSqrtHalfPi));
  CHECK(isotropic_scalar(CorrelationModel::gaussian_bell(1.0, 1.0), 4.0) == doctest::Approx(0.25 * kSqrtHalfPi));
}

TEST_CASE("diffusion law and the cell problem") {
  const DiffusionLaw law(CorrelationModel::gaussian_bell(1.0, 1.0), 3);
  CHECK(law.scalar(1.0) == doctest::Approx(1.25331413731550).epsilon(1e-12));
  CHECK(law.cell_amplitude(1.0) == doctest::Approx(0.398942280401433).epsilon(1e-12));
  CHECK(law.spatial_tensor(1.0)(1, 1) == doctest::Approx(0.132980760133811).epsilon(1e-12));
  CHECK(law.spatial_tensor(1.0)(0, 1) == 0.0);
  CHECK(law.spatial_tensor(2.0)(0, 0) / law.spatial_tensor(1.0)(0, 0) == doctest::Approx(32.0));
  CHECK(law.autocorrelation_rate(1.0) == doctest::Approx(2.0 * kSqrtHalfPi));
  CHECK(law.msd_slope(1.0) == doctest::Approx(2.0 * law.spatial_tensor(1.0).trace()));
  const auto kv = vec({0.0, 1.5, 0.0});
  CHECK((law.matrix(kv) - diffusion_matrix(law.correlation(), kv)).cwiseAbs().maxCoeff() < 1e-10);

  // Stronger scattering lowers the spatial slope: d ∝ 1/R0.
  const DiffusionLaw strong(CorrelationModel::gaussian_bell(2.0, 1.0), 3);
  CHECK(strong.msd_slope(1.0) == doctest::Approx(0.5 * law.msd_slope(1.0)));
  const DiffusionLaw huge(CorrelationModel::gaussian_bell(1e8, 1.0), 3);
  CHECK(huge.msd_slope(1.0) < 1e-7);

  for (double k : {0.5, 1.0, 2.0}) {
    const auto cell = cell_problem(law, k);
    CHECK(cell.residual < 1e-6);
    CHECK(cell.amplitude == doctest::Approx(law.cell_amplitude(k)));
    CHECK((cell.d - law.spatial_tensor(k)).cwiseAbs().maxCoeff() < 1e-10 * std::pow(k, 5));
  }
  // χ_j = c k̂_j has zero sphere mean.
  const auto rule = sphere_rule(3);
  double wsum = 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    wsum += rule.weights[i];
    mean += rule.weights[i] * rule.nodes[i];
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mean.norm() < 1e-14);

  // The Galerkin path reproduces the closed form for the isotropic field.
  const DiffusionField field = [&](const Eigen::VectorXd& v) { return law.matrix(v); };
  const auto num = cell_problem_numeric(field, 1.0, 3);
  CHECK((num.d - law.spatial_tensor(1.0)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(num.residual < 1e-6);
  // An anisotropic field whose degree-1 projection is not exact reports a residual.
  const DiffusionField aniso = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd vh = v / v.norm();
    const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(3, 3) - vh * vh.transpose();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    a(2, 2) = 3.0;
    return Eigen::MatrixXd(p * a * p);
  };
  const auto an = cell_problem_numeric(aniso, 1.0, 3);
  CHECK(an.residual > 1e-3);
  CHECK(an.d(2, 2) < an.d(0, 0));

  CHECK_THROWS(cell_problem(DiffusionLaw(CorrelationModel::gaussian_bell(1.0, 1.0), 2), 1.0));
}

TEST_CASE("sphere diffusion: frozen paths, determinism, kinetic-to-spatial bridge") {
  SphereDiffusionOptions opt;
  opt.horizon = 0.5;
  opt.dt = 1e-3;
  opt.paths = 200;
  opt.record_every = 50;
  const auto frozen = simulate_sphere_diffusion(0.0, vec({0.0, 2.0, 0.0}), opt);
  for (std::size_t i = 0; i < frozen.t.size(); ++i) {
    CHECK(frozen.autocorr[i] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(frozen.msd[i] == doctest::Approx(4.0 * frozen.t[i] * frozen.t[i]).epsilon(1e-12));
  }

  opt.paths = 500;
  opt.threads = 1;
  const auto a = simulate_sphere_diffusion(1.0, vec({1.0, 0.0, 0.0}), opt);
  opt.threads = 3;
  const auto b = simulate_sphere_diffusion(1.0, vec({1.0, 0.0, 0.0}), opt);
  CHECK(a.autocorr == b.autocorr);
  CHECK(a.msd == b.msd);
  CHECK(a.max_speed_error < 1e-14);

  // MSD of ∫v dt grows with slope 2 tr(d) = 2k⁴/((N-1)D) once the velocity has
  // decorrelated; the slope is taken from the last half of a long run.
  const DiffusionLaw law(CorrelationModel::gaussian_bell(1.0, 1.0), 3);
  SphereDiffusionOptions lo;
  lo.horizon = 6.0;
  lo.dt = 2e-3;
  lo.paths = 4000;
  lo.record_every = 100;
  lo.threads = 4;
  const auto r = simulate_sphere_diffusion(law, vec({1.0, 0.0, 0.0}), lo);
  const std::size_t last = r.t.size() - 1, mid = last / 2;
  const double slope = (r.msd[last] - r.msd[mid]) / (r.t[last] - r.t[mid]);
  CHECK(slope == doctest::Approx(law.msd_slope(1.0)).epsilon(0.1));
}

TEST_CASE("exponential rate fit") {
  std::vector<double> t, y, se;
  for (int i = 0; i <= 20; ++i) {
    t.push_back(0.05 * i);
    y.push_back(std::exp(-2.5 * t.back()));
    se.push_back(0.01);
  }
  const auto fit = fit_exponential_rate(t, y, se, 0.05);
  CHECK(fit.rate == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(fit.ci_low <= 2.5);
  CHECK(fit.ci_high >= 2.5);
  CHECK(fit.points > 10);
}

TEST_CASE("heat profile moments and the chi-square position test") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(2, 2) * 0.3;
  const double t = 2.0, s0 = 0.4;
  CHECK_THROWS(heat_profile(d, 0.0, vec({0.0, 0.0})));
  // Quadrature of mass and second moment on a grid.
  double mass = 0.0, second = 0.0;
  const double h = 0.05;
  for (double x = -15.0; x <= 15.0; x += h)
    for (double y = -15.0; y <= 15.0; y += h) {
      const double u = heat_profile(d, t, vec({x, y}), s0) * h * h;
      mass += u;
      second += (x * x + y * y) * u;
    }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(second == doctest::Approx(2.0 * d.trace() * t + 2.0 * s0).epsilon(1e-8));
  // Point datum: Gaussian with covariance 2dt.
  const double var = 2.0 * 0.3 * t;
  CHECK(heat_profile(d, t, vec({0.5, -1.0})) ==
        doctest::Approx(std::exp(-1.25 / (2.0 * var)) / (2.0 * std::numbers::pi * var)).epsilon(1e-13));

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::VectorXd> good, wide;
  for (int i = 0; i < 4000; ++i) {
    good.push_back(vec({std::sqrt(var) * g(rng), std::sqrt(var) * g(rng)}));
    wide.push_back(1.3 * good.back());
  }
  const auto ok = chi_square_position_test(good, d, t);
  CHECK(ok.bins == 20);
  CHECK(ok.dof == 19);
  CHECK(ok.pass);
  const auto bad = chi_square_position_test(wide, d, t);
  CHECK_FALSE(bad.pass);
  CHECK(bad.p_value < 1e-6);
}

TEST_CASE("spatial MSD fit on synthetic Brownian members") {
  std::mt19937_64 rng(3);
  std::vector<std::vector<ScaledSample>> members;
  for (int m = 0; m < 2000; ++m) members.push_back(random_walk_member(rng, 3, 0.8, 41, 2.0));
  const auto r = spatial_msd_test(members, 3, 0.8);
  CHECK(r.slope == doctest::Approx(0.8).epsilon(0.05));
  CHECK(r.ci_low < 0.8);
  CHECK(r.ci_high > 0.8);
  CHECK(r.relative_error == doctest::Approx(std::abs(r.slope - 0.8) / 0.8));
  CHECK_FALSE(r.too_few_members);

  std::vector<std::vector<ScaledSample>> few(members.begin(), members.begin() + 10);
  CHECK(spatial_msd_test(few, 3, 0.8).too_few_members);

  const auto dir = std::filesystem::temp_directory_path() / "solacc_unit";
  std::filesystem::create_directories(dir);
  write_msd_csv(dir / "msd.csv", r);
  const auto table = io::read_csv(dir / "msd.csv");
  CHECK(table.columns == std::vector<std::string>{"t", "msd", "stderr", "predictedSlope"});
  CHECK(table.rows.front()[3] == 0.8);
}

TEST_CASE("diffusion report") {
  const DiffusionLaw law(CorrelationModel::gaussian_bell(1.0, 1.0), 3);
  const auto j = diffusion_report(law, 1.0, {2.49}, {{2.4, 2.6}});
  for (const char* key : {"k", "Dmatrix", "Dscalar", "cellC", "dTensor", "fitRates", "CIs"}) CHECK(j.contains(key));
  CHECK(j["Dscalar"].get<double>() == doctest::Approx(kSqrtHalfPi));
  CHECK(j["Dmatrix"].size() == 3);
  CHECK(j["dTensor"][1][1].get<double>() == doctest::Approx(0.132980760133811));
  CHECK(j["CIs"][0][1].get<double>() == 2.6);
}
