#include "solacc/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace solacc {

namespace {
// FFTW planning is not thread safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

double wrap_centered(double x, double length) {
  double y = x - length * std::floor(x / length + 0.5);
  if (y >= 0.5 * length) y -= length;
  if (y < -0.5 * length) y += length;
  return y;
}

bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

void GridSpec::validate() const {
  if (dim < 1 || dim > 3) throw std::invalid_argument("grid dimension must be 1, 2 or 3");
  if (!(length > 0.0) || !std::isfinite(length))
    throw std::invalid_argument("grid length must be positive");
  if (points < 4 || !is_power_of_two(points))
    throw std::invalid_argument("grid points per axis must be a power of two >= 4, got " +
                                std::to_string(points));
}

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (int d = 0; d < dim; ++d) n *= static_cast<std::size_t>(points);
  return n;
}

double GridSpec::cell_volume() const { return std::pow(spacing(), dim); }

std::array<int, 3> GridSpec::unravel(std::size_t flat) const {
  std::array<int, 3> idx{0, 0, 0};
  for (int d = dim - 1; d >= 0; --d) {
    idx[d] = static_cast<int>(flat % points);
    flat /= points;
  }
  return idx;
}

Vec3 GridSpec::position(std::size_t flat) const {
  auto idx = unravel(flat);
  Vec3 x{0.0, 0.0, 0.0};
  for (int d = 0; d < dim; ++d) x[d] = coordinate(idx[d]);
  return x;
}

double GridSpec::wavenumber(int i) const {
  const double dk = 2.0 * std::numbers::pi / length;
  return (i < points / 2 ? i : i - points) * dk;
}

double GridSpec::derivative_wavenumber(int i) const {
  return i == points / 2 ? 0.0 : wavenumber(i);
}

struct Fft::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

Fft::Fft(const GridSpec& grid) : grid_(grid), plans_(std::make_unique<Plans>()) {
  grid_.validate();
  int n[3] = {grid_.points, grid_.points, grid_.points};
  ComplexVec scratch(grid_.size());
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  std::lock_guard lock(planner_mutex());
  plans_->forward = fftw_plan_dft(grid_.dim, n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  plans_->backward = fftw_plan_dft(grid_.dim, n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  if (!plans_->forward || !plans_->backward) throw std::runtime_error("FFT planning failed");
}

Fft::~Fft() {
  if (!plans_) return;
  std::lock_guard lock(planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->backward) fftw_destroy_plan(plans_->backward);
}

Fft::Fft(Fft&&) noexcept = default;
Fft& Fft::operator=(Fft&&) noexcept = default;

void Fft::forward(ComplexVec& data) const {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plans_->forward, buf, buf);
}

void Fft::backward(ComplexVec& data) const {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plans_->backward, buf, buf);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& z : data) z *= scale;
}

Spectral::Spectral(const GridSpec& grid) : grid_(grid), fft_(grid) {
  const std::size_t n = grid_.size();
  k2_.assign(n, 0.0);
  for (int d = 0; d < grid_.dim; ++d) kd_[d].assign(n, 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    auto idx = grid_.unravel(f);
    double k2 = 0.0;
    for (int d = 0; d < grid_.dim; ++d) {
      const double k = grid_.wavenumber(idx[d]);
      k2 += k * k;
      kd_[d][f] = grid_.derivative_wavenumber(idx[d]);
    }
    k2_[f] = k2;
  }
}

ComplexVec Spectral::derivative(const ComplexVec& u, int axis) const {
  ComplexVec w = u;
  fft_.forward(w);
  const auto& k = kd_[axis];
  for (std::size_t f = 0; f < w.size(); ++f) w[f] *= Complex(0.0, k[f]);
  fft_.backward(w);
  return w;
}

ComplexVec Spectral::laplacian(const ComplexVec& u) const {
  ComplexVec w = u;
  fft_.forward(w);
  for (std::size_t f = 0; f < w.size(); ++f) w[f] *= -k2_[f];
  fft_.backward(w);
  return w;
}

ComplexVec Spectral::translate(const ComplexVec& u, const Vec3& shift) const {
  const int m = grid_.points;
  std::array<std::vector<Complex>, 3> phase;
  for (int d = 0; d < grid_.dim; ++d) {
    phase[d].resize(m);
    for (int i = 0; i < m; ++i) {
      const double k = grid_.wavenumber(i);
      phase[d][i] = (i == m / 2) ? Complex(std::cos(k * shift[d]), 0.0)
                                 : std::polar(1.0, -k * shift[d]);
    }
  }
  ComplexVec w = u;
  fft_.forward(w);
  for (std::size_t f = 0; f < w.size(); ++f) {
    auto idx = grid_.unravel(f);
    Complex p = phase[0][idx[0]];
    for (int d = 1; d < grid_.dim; ++d) p *= phase[d][idx[d]];
    w[f] *= p;
  }
  fft_.backward(w);
  return w;
}

double inner(const ComplexVec& u, const ComplexVec& v, const GridSpec& grid) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    s += u[i].real() * v[i].real() + u[i].imag() * v[i].imag();
  return s * grid.cell_volume();
}

double l2_squared(const ComplexVec& u, const GridSpec& grid) { return inner(u, u, grid); }

ComplexVec to_complex(std::span<const double> values) {
  ComplexVec out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i];
  return out;
}

}  // namespace solacc
