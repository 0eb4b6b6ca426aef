#include "solacc/diffusion.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "solacc/io.hpp"
#include "solacc/seed.hpp"

namespace solacc {

namespace {

void check_dim(int dim) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("dimension must be 1, 2 or 3");
}

void check_compact_dim(const CorrelationModel& corr, int dim) {
  if (corr.kind == CorrelationKind::CompactKernel && corr.dim != dim)
    throw std::invalid_argument("compact-kernel model was built for a different dimension");
}

// Hessian of the radial R at x = s k̂, contracted with unit vectors e_i, e_j.
double hessian_entry(const CorrelationModel& corr, const Eigen::VectorXd& khat, int i, int j, double s) {
  const double r = std::abs(s);
  const double delta = i == j ? 1.0 : 0.0;
  const auto R = analytic_R(corr, r);
  if (r < 1e-12) return R.second * delta;
  const double kk = khat[i] * khat[j];
  return R.second * kk + R.first / r * (delta - kk);
}

}  // namespace

Eigen::MatrixXd diffusion_matrix(const CorrelationModel& corr, const Eigen::VectorXd& k) {
  const int n = static_cast<int>(k.size());
  check_dim(n);
  check_compact_dim(corr, n);
  const double knorm = k.norm();
  if (!(knorm > 0.0)) throw std::invalid_argument("diffusion matrix is undefined at k = 0");
  const Eigen::VectorXd khat = k / knorm;
  const double S = corr.support_radius();

  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  Eigen::MatrixXd D(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      auto f = [&](double s) { return hessian_entry(corr, khat, i, j, s); };
      const double left = GK::integrate(f, -S, 0.0, 15, 1e-14);
      const double right = GK::integrate(f, 0.0, S, 15, 1e-14);
      D(i, j) = D(j, i) = -(left + right) / (2.0 * knorm);
    }
  }
  D = 0.5 * (D + D.transpose()).eval();

  const double along = khat.dot(D * khat);
  if (std::abs(along) > 1e-12)
    throw std::runtime_error("diffusion matrix has eigenvalue " + io::format_number(along) +
                             " along k, expected 0");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(D);
  if (eig.eigenvalues().minCoeff() < -1e-12)
    throw std::runtime_error("diffusion matrix is not positive semidefinite");
  return D;
}

double isotropic_scalar(const CorrelationModel& corr, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("diffusion scalar is undefined at k = 0");
  return -analytic_D_input(corr) / k;
}

// ---------------------------------------------------------------------------

DiffusionLaw::DiffusionLaw(const CorrelationModel& corr, int dim) : corr_(corr), dim_(dim) {
  check_dim(dim);
  check_compact_dim(corr, dim);
  corr_.validate();
  input_ = analytic_D_input(corr_);
  if (!(input_ < 0.0))
    throw std::invalid_argument("correlation gives non-positive transverse diffusion (∫R'(s)/s ds >= 0)");
}

Eigen::MatrixXd DiffusionLaw::matrix(const Eigen::VectorXd& k) const {
  const double kn = k.norm();
  if (!(kn > 0.0)) throw std::invalid_argument("diffusion matrix is undefined at k = 0");
  const Eigen::VectorXd khat = k / kn;
  return scalar(kn) * (Eigen::MatrixXd::Identity(k.size(), k.size()) - khat * khat.transpose());
}

double DiffusionLaw::cell_amplitude(double k) const {
  if (dim_ < 2) throw std::invalid_argument("cell problem needs dimension >= 2");
  return k * k * k / ((dim_ - 1) * scalar(k));
}

Eigen::MatrixXd DiffusionLaw::spatial_tensor(double k) const {
  if (dim_ < 2) throw std::invalid_argument("spatial tensor needs dimension >= 2");
  const double d = std::pow(k, 4) / (dim_ * (dim_ - 1) * scalar(k));
  return d * Eigen::MatrixXd::Identity(dim_, dim_);
}

double DiffusionLaw::autocorrelation_rate(double k) const { return (dim_ - 1) * scalar(k) / (k * k); }

double DiffusionLaw::msd_slope(double k) const {
  return 2.0 * std::pow(k, 4) / ((dim_ - 1) * scalar(k));
}

// ---------------------------------------------------------------------------

ExponentialFit fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& y,
                                    const std::vector<double>& se, double floor) {
  bool unit = false;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] > 0.0 && y[i] > floor && !(se[i] > 0.0)) unit = true;
  double swt2 = 0.0, swty = 0.0;
  ExponentialFit fit;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0) || !(y[i] > floor)) continue;
    // Var(log ȳ) ≈ (se/ȳ)².
    const double w = unit ? 1.0 : (y[i] / se[i]) * (y[i] / se[i]);
    swt2 += w * t[i] * t[i];
    swty += w * t[i] * std::log(y[i]);
    ++fit.points;
  }
  if (fit.points == 0) return fit;
  fit.rate = -swty / swt2;
  fit.stderr_ = unit ? 0.0 : 1.0 / std::sqrt(swt2);
  fit.ci_low = fit.rate - 1.96 * fit.stderr_;
  fit.ci_high = fit.rate + 1.96 * fit.stderr_;
  return fit;
}

SphereDiffusionResult simulate_sphere_diffusion(double D, const Eigen::VectorXd& v0,
                                                const SphereDiffusionOptions& opt) {
  const int n = static_cast<int>(v0.size());
  check_dim(n);
  const double speed = v0.norm();
  if (!(speed > 0.0)) throw std::invalid_argument("sphere diffusion needs |v0| > 0");
  if (D < 0.0) throw std::invalid_argument("diffusion coefficient must be non-negative");
  if (!(opt.dt > 0.0) || !(opt.horizon > 0.0) || opt.paths < 1 || opt.record_every < 1)
    throw std::invalid_argument("invalid sphere diffusion options");

  const long steps = std::lround(opt.horizon / opt.dt);
  const double dt = opt.horizon / steps;
  const int records = static_cast<int>(steps / opt.record_every) + 1;
  const double amp = std::sqrt(2.0 * D * dt);

  // Accumulators per block: Σc, Σc², Σm, Σm², max speed error.
  constexpr int kBlock = 100;
  const int blocks = (opt.paths + kBlock - 1) / kBlock;
  struct Sums {
    std::vector<double> c, c2, m, m2;
    double speed_err = 0.0;
  };
  std::vector<Sums> block_sums(blocks);
  std::atomic<int> next{0};

  auto worker = [&]() {
    std::vector<double> vv(n), xx(n), g(n), vhat0(n);
    for (int b = next++; b < blocks; b = next++) {
      Sums s;
      s.c.assign(records, 0.0);
      s.c2 = s.m = s.m2 = s.c;
      for (int p = b * kBlock; p < std::min(opt.paths, (b + 1) * kBlock); ++p) {
        auto rng = make_rng(derive_seed(opt.seed, "sphere", static_cast<std::uint64_t>(p)));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int d = 0; d < n; ++d) {
          vv[d] = v0[d];
          vhat0[d] = v0[d] / speed;
          xx[d] = 0.0;
        }
        auto record = [&](int r) {
          double c = 0.0, m = 0.0;
          for (int d = 0; d < n; ++d) {
            c += vv[d] * vhat0[d] / speed;
            m += xx[d] * xx[d];
          }
          s.c[r] += c;
          s.c2[r] += c * c;
          s.m[r] += m;
          s.m2[r] += m * m;
        };
        record(0);
        for (long k = 1; k <= steps; ++k) {
          double gv = 0.0;
          for (int d = 0; d < n; ++d) {
            g[d] = amp * normal(rng);
            gv += g[d] * vv[d];
          }
          gv /= speed * speed;
          double nrm = 0.0;
          for (int d = 0; d < n; ++d) {
            const double old = vv[d];
            vv[d] = old + g[d] - gv * old;  // tangent increment
            nrm += vv[d] * vv[d];
            g[d] = old;
          }
          const double scale = speed / std::sqrt(nrm);
          double sp = 0.0;
          for (int d = 0; d < n; ++d) {
            vv[d] *= scale;
            sp += vv[d] * vv[d];
            xx[d] += 0.5 * (g[d] + vv[d]) * dt;
          }
          s.speed_err = std::max(s.speed_err, std::abs(std::sqrt(sp) - speed) / speed);
          if (k % opt.record_every == 0) record(static_cast<int>(k / opt.record_every));
        }
      }
      block_sums[b] = std::move(s);
    }
  };
  const int nthreads = std::max(1, std::min(opt.threads, blocks));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SphereDiffusionResult res;
  res.paths = opt.paths;
  std::vector<double> c(records, 0.0), c2 = c, m = c, m2 = c;
  for (const auto& s : block_sums) {
    for (int r = 0; r < records; ++r) {
      c[r] += s.c[r];
      c2[r] += s.c2[r];
      m[r] += s.m[r];
      m2[r] += s.m2[r];
    }
    res.max_speed_error = std::max(res.max_speed_error, s.speed_err);
  }
  const double cnt = opt.paths;
  auto se = [&](double sum, double sum2) {
    if (opt.paths < 2) return 0.0;
    const double mean = sum / cnt;
    return std::sqrt(std::max(0.0, (sum2 - cnt * mean * mean) / (cnt - 1.0)) / cnt);
  };
  for (int r = 0; r < records; ++r) {
    res.t.push_back(r * opt.record_every * dt);
    res.autocorr.push_back(c[r] / cnt);
    res.autocorr_se.push_back(se(c[r], c2[r]));
    res.msd.push_back(m[r] / cnt);
    res.msd_se.push_back(se(m[r], m2[r]));
  }
  res.fit = fit_exponential_rate(res.t, res.autocorr, res.autocorr_se, opt.fit_floor);
  return res;
}

SphereDiffusionResult simulate_sphere_diffusion(const DiffusionLaw& law, const Eigen::VectorXd& v0,
                                                const SphereDiffusionOptions& options) {
  if (v0.size() != law.dim()) throw std::invalid_argument("velocity dimension does not match the law");
  return simulate_sphere_diffusion(law.scalar(v0.norm()), v0, options);
}

// ---------------------------------------------------------------------------

SphereRule sphere_rule(int dim, int azimuth) {
  SphereRule rule;
  if (dim == 2) {
    for (int i = 0; i < azimuth; ++i) {
      const double phi = 2.0 * std::numbers::pi * (i + 0.5) / azimuth;
      Eigen::VectorXd v(2);
      v << std::cos(phi), std::sin(phi);
      rule.nodes.push_back(v);
      rule.weights.push_back(1.0 / azimuth);
    }
    return rule;
  }
  if (dim != 3) throw std::invalid_argument("sphere rules exist for dimensions 2 and 3");
  using GL = boost::math::quadrature::gauss<double, 20>;
  const auto& x = GL::abscissa();
  const auto& w = GL::weights();
  for (std::size_t a = 0; a < x.size(); ++a) {
    const int sign_count = x[a] == 0.0 ? 1 : 2;
    for (int sgn = 0; sgn < sign_count; ++sgn) {
      const double z = sgn == 0 ? x[a] : -x[a];
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      for (int i = 0; i < azimuth; ++i) {
        const double phi = 2.0 * std::numbers::pi * (i + 0.5) / azimuth;
        Eigen::VectorXd v(3);
        v << rho * std::cos(phi), rho * std::sin(phi), z;
        rule.nodes.push_back(v);
        rule.weights.push_back(0.5 * w[a] / azimuth);
      }
    }
  }
  return rule;
}

double cell_residual(const DiffusionField& D, const Eigen::MatrixXd& C, double k, int dim, double step) {
  const double hstep = step * k;
  const auto rule = sphere_rule(dim, 12);
  // Flux F_l(v) = D(v) ∇χ_l(v), with ∇v̂_m = (e_m - v̂_m v̂)/|v| exact.
  auto flux = [&](const Eigen::VectorXd& v, int l) {
    const double r = v.norm();
    const Eigen::VectorXd vh = v / r;
    const Eigen::VectorXd coeff = C.row(l).transpose();
    const Eigen::VectorXd grad = (coeff - coeff.dot(vh) * vh) / r;
    return Eigen::VectorXd(D(v) * grad);
  };
  double worst = 0.0;
  for (const auto& node : rule.nodes) {
    const Eigen::VectorXd v = k * node;
    for (int l = 0; l < dim; ++l) {
      double div = 0.0;
      for (int i = 0; i < dim; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
        e[i] = hstep;
        const double fp2 = flux(v + 2 * e, l)[i], fp1 = flux(v + e, l)[i];
        const double fm1 = flux(v - e, l)[i], fm2 = flux(v - 2 * e, l)[i];
        div += (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * hstep);
      }
      worst = std::max(worst, std::abs(div + v[l]) / k);
    }
  }
  return worst;
}

CellSolution cell_problem_numeric(const DiffusionField& D, double k, int dim) {
  if (dim < 2) throw std::invalid_argument("cell problem needs dimension >= 2");
  if (!(k > 0.0)) throw std::invalid_argument("cell problem needs |k| > 0");
  const auto rule = sphere_rule(dim, 24);
  // Weak form on degree-1 harmonics φ_m = v̂_m:
  //   A_mn = ⟨∇φ_m · D ∇φ_n⟩,  A c_l = k ⟨v̂ v̂_l⟩.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(dim, dim);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim, dim);
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const Eigen::VectorXd& nd = rule.nodes[q];
    const Eigen::MatrixXd P = (I - nd * nd.transpose()) / k;  // column m is ∇φ_m
    A += rule.weights[q] * P.transpose() * D(k * nd) * P;
    B += rule.weights[q] * k * nd * nd.transpose();
  }
  CellSolution sol;
  sol.k = k;
  sol.dim = dim;
  sol.amplitude = std::numeric_limits<double>::quiet_NaN();
  sol.coefficients = A.ldlt().solve(B).transpose();  // row l holds c_l
  sol.d = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const Eigen::VectorXd& nd = rule.nodes[q];
    const Eigen::VectorXd chi = sol.coefficients * nd;
    sol.d += rule.weights[q] * (k * nd) * chi.transpose();
  }
  sol.residual = cell_residual(D, sol.coefficients, k, dim);
  return sol;
}

CellSolution cell_problem(const DiffusionLaw& law, double k) {
  const int n = law.dim();
  if (n < 3) throw std::invalid_argument("spatial diffusion requires dimension N >= 3");
  if (!(k > 0.0)) throw std::invalid_argument("cell problem needs |k| > 0");
  CellSolution sol;
  sol.k = k;
  sol.dim = n;
  sol.amplitude = law.cell_amplitude(k);
  sol.coefficients = sol.amplitude * Eigen::MatrixXd::Identity(n, n);
  sol.d = law.spatial_tensor(k);
  sol.residual = cell_residual([&](const Eigen::VectorXd& v) { return law.matrix(v); },
                               sol.coefficients, k, n);
  return sol;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd heat_covariance(const Eigen::MatrixXd& d, double t, double initial_variance) {
  if (!(t > 0.0)) throw std::invalid_argument("heat profile needs t > 0");
  return 2.0 * t * d + initial_variance * Eigen::MatrixXd::Identity(d.rows(), d.cols());
}

}  // namespace

double heat_profile(const Eigen::MatrixXd& d, double t, const Eigen::VectorXd& x, double initial_variance) {
  const Eigen::MatrixXd cov = heat_covariance(d, t, initial_variance);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("heat covariance is not positive definite");
  const Eigen::VectorXd y = llt.matrixL().solve(x);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const int n = static_cast<int>(x.size());
  return std::exp(-0.5 * y.squaredNorm() - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi));
}

ChiSquareResult chi_square_position_test(const std::vector<Eigen::VectorXd>& positions,
                                         const Eigen::MatrixXd& d, double t, int bins, double level,
                                         double initial_variance) {
  if (positions.empty()) throw std::invalid_argument("no positions to test");
  if (bins < 2) throw std::invalid_argument("at least two bins are needed");
  const int n = static_cast<int>(d.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(heat_covariance(d, t, initial_variance));
  if (llt.info() != Eigen::Success) throw std::invalid_argument("heat covariance is not positive definite");
  boost::math::chi_squared_distribution<double> dist(n);
  std::vector<double> edges;
  for (int b = 1; b < bins; ++b) edges.push_back(boost::math::quantile(dist, static_cast<double>(b) / bins));
  std::vector<double> counts(bins, 0.0);
  for (const auto& x : positions) {
    const double q = llt.matrixL().solve(x).squaredNorm();
    const auto it = std::upper_bound(edges.begin(), edges.end(), q);
    counts[static_cast<std::size_t>(it - edges.begin())] += 1.0;
  }
  const double expected = static_cast<double>(positions.size()) / bins;
  ChiSquareResult res;
  res.bins = bins;
  res.dof = bins - 1;
  for (double c : counts) res.statistic += (c - expected) * (c - expected) / expected;
  res.p_value = boost::math::cdf(boost::math::complement(
      boost::math::chi_squared_distribution<double>(res.dof), res.statistic));
  res.pass = res.p_value >= level;
  return res;
}

MsdTestResult spatial_msd_test(const std::vector<std::vector<ScaledSample>>& members, int dim,
                               double predicted_slope, double t0_fraction, double target_ci) {
  if (members.size() < 2) throw std::invalid_argument("MSD test needs at least two members");
  const std::size_t nt = members.front().size();
  for (const auto& m : members)
    if (m.size() != nt) throw std::invalid_argument("members have different sample counts");
  MsdTestResult res;
  res.predicted = predicted_slope;
  const double cnt = static_cast<double>(members.size());
  for (std::size_t i = 0; i < nt; ++i) {
    double s = 0.0, s2 = 0.0;
    for (const auto& m : members) {
      double r2 = 0.0;
      for (int d = 0; d < dim; ++d) r2 += (m[i].x[d] - m[0].x[d]) * (m[i].x[d] - m[0].x[d]);
      s += r2;
      s2 += r2 * r2;
    }
    const double mean = s / cnt;
    res.t.push_back(members.front()[i].tbar);
    res.msd.push_back(mean);
    res.msd_se.push_back(std::sqrt(std::max(0.0, (s2 - cnt * mean * mean) / (cnt - 1.0)) / cnt));
  }

  const double T = res.t.back();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < nt; ++i)
    if (res.t[i] >= t0_fraction * T - 1e-12) idx.push_back(i);
  if (idx.size() < 2) throw std::invalid_argument("fit window holds fewer than two samples");
  double tm = 0.0;
  for (auto i : idx) tm += res.t[i];
  tm /= static_cast<double>(idx.size());
  double sxx = 0.0;
  for (auto i : idx) sxx += (res.t[i] - tm) * (res.t[i] - tm);

  double s = 0.0, s2 = 0.0;
  for (const auto& m : members) {
    double slope = 0.0;
    for (auto i : idx) {
      double r2 = 0.0;
      for (int d = 0; d < dim; ++d) r2 += (m[i].x[d] - m[0].x[d]) * (m[i].x[d] - m[0].x[d]);
      slope += (res.t[i] - tm) / sxx * r2;
    }
    s += slope;
    s2 += slope * slope;
  }
  res.slope = s / cnt;
  res.slope_se = std::sqrt(std::max(0.0, (s2 - cnt * res.slope * res.slope) / (cnt - 1.0)) / cnt);
  res.ci_low = res.slope - 1.96 * res.slope_se;
  res.ci_high = res.slope + 1.96 * res.slope_se;
  res.relative_error = std::abs(res.slope - predicted_slope) / std::abs(predicted_slope);
  res.too_few_members = 1.96 * res.slope_se > target_ci * std::abs(res.slope);
  return res;
}

void write_msd_csv(const std::filesystem::path& path, const MsdTestResult& r) {
  io::CsvWriter csv(path, {"t", "msd", "stderr", "predictedSlope"});
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    const double row[] = {r.t[i], r.msd[i], r.msd_se[i], r.predicted};
    csv.row(row);
  }
}

nlohmann::json diffusion_report(const DiffusionLaw& law, double k, const std::vector<double>& fit_rates,
                                const std::vector<std::array<double, 2>>& cis) {
  const int n = law.dim();
  Eigen::VectorXd kv = Eigen::VectorXd::Zero(n);
  kv[0] = k;
  auto to_json = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["k"] = k;
  j["Dmatrix"] = to_json(diffusion_matrix(law.correlation(), kv));
  j["Dscalar"] = law.scalar(k);
  if (n >= 2) {
    j["cellC"] = law.cell_amplitude(k);
    j["dTensor"] = to_json(law.spatial_tensor(k));
  } else {
    j["cellC"] = nullptr;
    j["dTensor"] = nullptr;
  }
  j["fitRates"] = fit_rates;
  nlohmann::json ci = nlohmann::json::array();
  for (const auto& c : cis) ci.push_back({c[0], c[1]});
  j["CIs"] = ci;
  return j;
}

}  // namespace solacc
