#include "solacc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "solacc/io.hpp"

namespace solacc {

namespace {

constexpr std::pair<ExperimentKind, const char*> kKindNames[] = {
    {ExperimentKind::SynthField, "synth-field"},
    {ExperimentKind::Profile, "profile"},
    {ExperimentKind::EvolveTrack, "evolve-track"},
    {ExperimentKind::Compare, "compare"},
    {ExperimentKind::Ensemble, "ensemble"},
    {ExperimentKind::DiffusionTheory, "diffusion-theory"},
    {ExperimentKind::SphereSim, "sphere-sim"},
    {ExperimentKind::SpatialMsd, "spatial-msd"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
  }
}

long long parse_integer(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("key '" + key + "': expected an integer, got '" + text + "'");
  return v;
}

bool uses_soliton(ExperimentKind k) {
  return k == ExperimentKind::Profile || k == ExperimentKind::EvolveTrack || k == ExperimentKind::Compare;
}

bool uses_velocity(ExperimentKind k) {
  return k == ExperimentKind::Ensemble || k == ExperimentKind::DiffusionTheory ||
         k == ExperimentKind::SphereSim || k == ExperimentKind::SpatialMsd;
}

bool uses_field(const ExperimentConfig& c) {
  switch (c.kind) {
    case ExperimentKind::SynthField:
    case ExperimentKind::Compare:
    case ExperimentKind::Ensemble:
    case ExperimentKind::DiffusionTheory:
    case ExperimentKind::SphereSim:
    case ExperimentKind::SpatialMsd:
      return true;
    case ExperimentKind::EvolveTrack:
      return c.solver.lambda > 0.0;
    case ExperimentKind::Profile:
      return false;
  }
  return false;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kKindNames)
    if (name == n) return k;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

// ---------------------------------------------------------------------------

Config Config::parse(std::string_view text) {
  Config c;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (c.entries_.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    c.entries_[key] = value;
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  const std::string v = it == entries_.end() ? fallback : it->second;
  resolved_[key] = v;
  return v;
}

std::string Config::require_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing required key '" + key + "'");
  resolved_[key] = it->second;
  return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  const double v = it == entries_.end() ? fallback : parse_double(key, it->second);
  resolved_[key] = io::format_number(v);
  return v;
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = entries_.find(key);
  const long long v = it == entries_.end() ? fallback : parse_integer(key, it->second);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError("key '" + key + "': integer out of range");
  resolved_[key] = std::to_string(v);
  return static_cast<int>(v);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = entries_.find(key);
  std::uint64_t v = fallback;
  if (it != entries_.end()) {
    const auto* end = it->second.data() + it->second.size();
    const auto [ptr, ec] = std::from_chars(it->second.data(), end, v);
    if (ec != std::errc() || ptr != end)
      throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + it->second + "'");
  }
  resolved_[key] = std::to_string(v);
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  bool v = fallback;
  if (it != entries_.end()) {
    const auto& t = it->second;
    if (t == "true" || t == "1" || t == "yes" || t == "on")
      v = true;
    else if (t == "false" || t == "0" || t == "no" || t == "off")
      v = false;
    else
      throw ConfigError("key '" + key + "': expected a boolean, got '" + t + "'");
  }
  resolved_[key] = v ? "true" : "false";
  return v;
}

Vec3 Config::get_vec(const std::string& key, const Vec3& fallback) const {
  const auto it = entries_.find(key);
  Vec3 v = fallback;
  if (it != entries_.end()) {
    v = {0.0, 0.0, 0.0};
    std::istringstream in(it->second);
    std::string part;
    int i = 0;
    while (std::getline(in, part, ',')) {
      if (i == 3) throw ConfigError("key '" + key + "': at most three components");
      v[i++] = parse_double(key, trim(part));
    }
    if (i == 0) throw ConfigError("key '" + key + "': empty vector");
  }
  resolved_[key] = io::format_number(v[0]) + "," + io::format_number(v[1]) + "," + io::format_number(v[2]);
  return v;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!resolved_.count(k)) out.push_back(k);
  return out;
}

std::string Config::dump_resolved() const {
  std::string out;
  for (const auto& [k, v] : resolved_) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from(const Config& c) {
  ExperimentConfig e;
  e.kind = experiment_kind_from_string(c.require_string("experiment"));
  e.seed = c.get_u64("seed", 1);
  e.threads = c.get_int("threads", 1);
  e.dim = c.get_int("dim", 1);

  auto read_field = [&]() {
    const auto kind = correlation_kind_from_string(c.get_string("field.kind", "gaussian-bell"));
    const double r0 = c.get_double("field.R0", 1.0);
    if (!(r0 >= 0.0)) throw ConfigError("B2 violated: field.R0 < 0 gives a negative spectral density");
    if (kind == CorrelationKind::GaussianBell)
      e.corr = CorrelationModel::gaussian_bell(r0, c.get_double("field.ell", 1.0));
    else
      e.corr = CorrelationModel::compact_kernel(r0, c.get_double("field.rho0", 1.0), e.dim);
    e.method = synthesis_method_from_string(c.get_string("field.method", "spectral"));
  };
  auto read_field_grid = [&]() {
    e.field_grid = GridSpec{e.dim, c.get_double("field.L", 64.0), c.get_int("field.M", 256)};
  };
  auto read_soliton = [&]() {
    e.s = c.get_double("soliton.s", 2.0);
    e.sigma.mu = c.get_double("soliton.mu", 1.0);
    e.sigma.a = c.get_vec("soliton.a", {0.0, 0.0, 0.0});
    e.sigma.v = c.get_vec("soliton.v", {0.0, 0.0, 0.0});
    e.sigma.gamma = c.get_double("soliton.gamma", 0.0);
  };

  try {
    switch (e.kind) {
      case ExperimentKind::SynthField:
        read_field();
        read_field_grid();
        e.realizations = c.get_int("field.realizations", 1);
        break;
      case ExperimentKind::Profile:
        read_soliton();
        e.pde_grid = GridSpec{e.dim, c.get_double("grid.L", 60.0), c.get_int("grid.M", 1024)};
        break;
      case ExperimentKind::EvolveTrack:
        read_soliton();
        e.pde_grid = GridSpec{e.dim, c.get_double("grid.L", 60.0), c.get_int("grid.M", 1024)};
        e.solver.dt = c.get_double("solver.dt", 1e-3);
        e.solver.lambda = c.get_double("solver.lambda", 0.0);
        e.solver.h = c.get_double("solver.h", 1.0);
        e.solver.s = e.s;
        e.solver.dealias = c.get_bool("solver.dealias", false);
        e.pde_horizon = c.get_double("solver.T", 10.0);
        e.tracking.stride = c.get_int("tracking.stride", 10);
        e.tracking.diagnostics = c.get_bool("tracking.diagnostics", true);
        e.tracking.project.delta = c.get_double("tracking.delta", 0.5);
        e.schedule_h = e.solver.h;
        if (e.solver.lambda > 0.0) {
          read_field();
          read_field_grid();
        }
        break;
      case ExperimentKind::Compare:
        read_soliton();
        read_field();
        read_field_grid();
        e.compare.h = c.get_double("compare.h", 0.1);
        e.compare.lambda = c.get_double("compare.lambda", 0.5);
        e.compare.horizon = c.get_double("compare.T", 1.0);
        e.compare.dt = c.get_double("compare.dt", 5e-3);
        e.compare.points = c.get_int("compare.points", 0);
        e.compare.stride = c.get_int("compare.stride", 20);
        e.compare.cbar = c.get_double("compare.cbar", 1.0);
        e.compare.sigma0 = e.sigma;
        e.compare.s = e.s;
        e.schedule_h = e.compare.h;
        break;
      case ExperimentKind::Ensemble:
      case ExperimentKind::SpatialMsd: {
        read_field();
        e.v0 = c.get_vec("v0", {1.0, 0.0, 0.0});
        auto& s = e.ensemble;
        s.count = c.get_int("ensemble.count", 100);
        s.base_seed = e.seed;
        s.lambda = c.get_double("ensemble.lambda", 0.1);
        s.v0 = e.v0;
        s.horizon = c.get_double("ensemble.T", 2.0);
        s.dt = c.get_double("ensemble.dt", 0.05);
        s.dim = e.dim;
        s.corr = e.corr;
        s.method = e.method;
        s.points_per_length = c.get_double("ensemble.pointsPerLength", 3.0);
        s.features = c.get_int("field.features", 512);
        s.samples = c.get_int("ensemble.samples", 41);
        s.threads = e.threads;
        e.schedule_h = c.get_double("ensemble.h", 0.0);
        if (e.kind == ExperimentKind::SpatialMsd) {
          e.beta = c.get_double("ensemble.beta", 0.1);
          s.time_exponent = 2.0 + 2.0 * e.beta;
          s.space_exponent = 2.0 + e.beta;
          e.t0_fraction = c.get_double("msd.t0Fraction", 0.2);
          e.target_ci = c.get_double("msd.targetCi", 0.1);
          e.bins = c.get_int("msd.bins", 20);
          e.level = c.get_double("msd.level", 0.01);
        }
        break;
      }
      case ExperimentKind::DiffusionTheory:
        read_field();
        e.v0 = c.get_vec("v0", {1.0, 0.0, 0.0});
        break;
      case ExperimentKind::SphereSim:
        read_field();
        e.v0 = c.get_vec("v0", {1.0, 0.0, 0.0});
        e.sphere.horizon = c.get_double("sphere.T", 1.0);
        e.sphere.dt = c.get_double("sphere.dt", 1e-3);
        e.sphere.paths = c.get_int("sphere.paths", 10000);
        e.sphere.record_every = c.get_int("sphere.recordEvery", 10);
        e.sphere.seed = e.seed;
        e.sphere.threads = e.threads;
        break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  e.raw = c;
  return e;
}

// ---------------------------------------------------------------------------

bool ValidationReport::ok() const {
  for (const auto& c : checks)
    if (c.verdict == Check::Verdict::Fail) return false;
  return true;
}

std::string ValidationReport::first_failure() const {
  for (const auto& c : checks)
    if (c.verdict == Check::Verdict::Fail) return c.detail;
  return {};
}

namespace {
const char* verdict_name(Check::Verdict v) {
  switch (v) {
    case Check::Verdict::Pass: return "PASS";
    case Check::Verdict::Fail: return "FAIL";
    case Check::Verdict::Warn: return "WARN";
  }
  return "?";
}
}  // namespace

std::string ValidationReport::text() const {
  std::string out;
  for (const auto& c : checks) {
    out += std::string(verdict_name(c.verdict)) + "  " + c.name;
    if (!c.detail.empty()) out += ": " + c.detail;
    out += "\n";
  }
  out += ok() ? "configuration valid\n" : "configuration invalid\n";
  return out;
}

nlohmann::json ValidationReport::json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks)
    arr.push_back({{"check", c.name}, {"verdict", verdict_name(c.verdict)}, {"detail", c.detail}});
  return {{"ok", ok()}, {"checks", arr}};
}

ValidationReport validate(const ExperimentConfig& e) {
  ValidationReport r;
  auto add = [&](std::string name, bool pass, std::string detail, bool warn_only = false) {
    const auto verdict = pass ? Check::Verdict::Pass : (warn_only ? Check::Verdict::Warn : Check::Verdict::Fail);
    r.checks.push_back({std::move(name), verdict, pass ? std::string{} : std::move(detail)});
  };
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      fn();
      add(name, true, {});
    } catch (const std::exception& err) {
      add(name, false, name + ": " + err.what());
    }
  };
  const int n = e.dim;
  const std::string fmt_n = std::to_string(n);

  add("dimension N in {1, 2, 3}", n >= 1 && n <= 3, "dimension must be 1, 2 or 3, got " + fmt_n);
  add("thread count >= 1", e.threads >= 1, "threads must be positive");

  if (uses_soliton(e.kind)) {
    const double critical = 4.0 / n;
    add("A4 subcritical nonlinearity 0 < s < 4/N", e.s > 0.0 && e.s < critical,
        "A4 violated: s = " + io::format_number(e.s) + " is not in (0, 4/N = " + io::format_number(critical) + ")");
    // m(μ) ∝ μ^{2/s - N/2} for the power nonlinearity.
    const double exponent = 2.0 / e.s - 0.5 * n;
    add("A4 orbital stability m'(mu) > 0", e.s > 0.0 && exponent > 0.0 && e.sigma.mu > 0.0,
        "A4 violated: m'(mu) <= 0 (mass exponent 2/s - N/2 = " + io::format_number(exponent) + ")");
    add("soliton frequency mu > 0", e.sigma.mu > 0.0, "mu must be positive");
  }

  if (uses_field(e)) {
    guarded("correlation model", [&] { e.corr.validate(); });
    add("B2 nonnegative spectral density (R^ >= 0)", e.corr.amplitude >= 0.0,
        "B2 violated: R0 < 0 gives a negative spectral density");
  }

  if (uses_velocity(e.kind)) {
    add("nonzero initial velocity |v0| != 0", norm(e.v0, n) > 0.0,
        "momentum-diffusion hypothesis violated: the limit requires |v0| != 0");
    if (e.corr.amplitude > 0.0 && n >= 2)
      guarded("positive transverse diffusion", [&] { DiffusionLaw law(e.corr, n); });
    add("momentum diffusion needs N >= 2", n >= 2, "momentum diffusion on the sphere needs N >= 2");
  }

  switch (e.kind) {
    case ExperimentKind::SynthField:
      guarded("field grid", [&] { e.field_grid.validate(); });
      add("realization count >= 1", e.realizations >= 1, "field.realizations must be >= 1");
      if (e.method == SynthesisMethod::RandomFourier)
        add("grid synthesis method", false, "random-fourier fields have no grid; use spectral or moving-average");
      break;
    case ExperimentKind::Profile:
      guarded("PDE grid", [&] { e.pde_grid.validate(); });
      break;
    case ExperimentKind::EvolveTrack:
      guarded("PDE grid", [&] { e.pde_grid.validate(); });
      guarded("solver parameters", [&] { e.solver.validate(); });
      add("horizon and stride", e.pde_horizon > 0.0 && e.tracking.stride >= 1, "solver.T and tracking.stride must be positive");
      if (e.solver.lambda > 0.0) {
        guarded("field grid", [&] { e.field_grid.validate(); });
        add("potential box covers the PDE box (L_psi h <= L_V)",
            e.pde_grid.length * e.solver.h <= e.field_grid.length * (1.0 + 1e-12),
            "grid.L * solver.h exceeds field.L");
      }
      break;
    case ExperimentKind::Compare: {
      guarded("field grid", [&] { e.field_grid.validate(); });
      add("comparison h in (0, 1]", e.compare.h > 0.0 && e.compare.h <= 1.0, "compare.h must lie in (0, 1]");
      add("comparison lambda in (0, 1]", e.compare.lambda > 0.0 && e.compare.lambda <= 1.0,
          "compare.lambda must lie in (0, 1]");
      if (e.compare.h > 0.0 && e.compare.h < 1.0 && e.compare.lambda > 0.0) {
        const double window = e.compare.cbar * std::abs(std::log(e.compare.h)) / e.compare.lambda;
        add("horizon inside the window C |log h| / lambda", e.compare.horizon <= window,
            "compare.T = " + io::format_number(e.compare.horizon) + " exceeds C|log h|/lambda = " +
                io::format_number(window) + "; errors are reported but not covered by the estimate",
            true);
      }
      break;
    }
    case ExperimentKind::Ensemble:
    case ExperimentKind::SpatialMsd:
      guarded("ensemble parameters", [&] { e.ensemble.validate(); });
      if (e.method != SynthesisMethod::RandomFourier && n >= 1 && n <= 3)
        guarded("ensemble field grid", [&] { e.ensemble.field_grid().validate(); });
      if (e.method == SynthesisMethod::RandomFourier)
        add("random-fourier needs gaussian-bell", e.corr.kind == CorrelationKind::GaussianBell,
            "random-fourier synthesis is only available for gaussian-bell correlations");
      if (e.kind == ExperimentKind::SpatialMsd) {
        add("spatial diffusion needs N >= 3", n >= 3, "spatial diffusion of the position requires N >= 3");
        add("beta > 0", e.beta > 0.0, "ensemble.beta must be positive");
      }
      if (e.schedule_h > 0.0 && e.schedule_h < 1.0 && e.ensemble.lambda > 0.0) {
        const double exponent = e.kind == ExperimentKind::SpatialMsd ? 1.0 : 1.5;
        const double value = std::abs(std::log(e.schedule_h)) * std::pow(e.ensemble.lambda, exponent);
        add("schedule |log h| lambda^" + io::format_number(exponent) + " large", value >= 1.0,
            "|log h| lambda^" + io::format_number(exponent) + " = " + io::format_number(value) +
                " is not large; the diffusion limit needs it to grow without bound",
            true);
      }
      break;
    case ExperimentKind::DiffusionTheory:
      break;
    case ExperimentKind::SphereSim:
      add("sphere simulation parameters",
          e.sphere.horizon > 0.0 && e.sphere.dt > 0.0 && e.sphere.paths >= 1 && e.sphere.record_every >= 1,
          "sphere.T, sphere.dt, sphere.paths and sphere.recordEvery must be positive");
      break;
  }
  if (uses_field(e) && e.kind != ExperimentKind::Ensemble && e.kind != ExperimentKind::SpatialMsd &&
      e.corr.kind == CorrelationKind::CompactKernel && e.method == SynthesisMethod::MovingAverage &&
      e.kind != ExperimentKind::DiffusionTheory && e.kind != ExperimentKind::SphereSim) {
    add("moving-average kernel fits the grid",
        e.corr.kernel_radius < e.field_grid.length / 4 && e.corr.kernel_radius >= 2.0 * e.field_grid.spacing(),
        "moving average needs 2 dx <= rho0 < L/4");
  }

  const auto unused = e.raw.unused_keys();
  std::string list;
  for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
  add("no unknown or unused keys", unused.empty(), "keys not used by this experiment: " + list);
  return r;
}

}  // namespace solacc
