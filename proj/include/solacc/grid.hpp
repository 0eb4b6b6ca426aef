#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <new>
#include <span>
#include <vector>

namespace solacc {

using Complex = std::complex<double>;

/// Allocator returning 64-byte aligned storage so every buffer handed to the
/// FFT backend has the alignment its plans were created with.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlignment = 64;

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    std::size_t bytes = n * sizeof(T);
    bytes = (bytes + kAlignment - 1) / kAlignment * kAlignment;
    if (bytes == 0) bytes = kAlignment;
    void* p = std::aligned_alloc(kAlignment, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using ComplexVec = std::vector<Complex, AlignedAllocator<Complex>>;
using RealVec = std::vector<double>;

/// Point or vector in up to three dimensions; only the first `dim` entries
/// are meaningful.
using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b, int dim) {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) s += a[d] * b[d];
  return s;
}
inline double norm(const Vec3& a, int dim) { return std::sqrt(dot(a, a, dim)); }

/// Wraps x into the periodic cell [-L/2, L/2).
double wrap_centered(double x, double length);

/// Uniform periodic grid on the box [-L/2, L/2)^dim with `points` samples per
/// axis. Index layout is row-major with the last axis fastest.
struct GridSpec {
  int dim = 1;
  double length = 1.0;
  int points = 64;

  void validate() const;

  std::size_t size() const;
  double spacing() const { return length / points; }
  double cell_volume() const;
  double origin() const { return -0.5 * length; }
  double coordinate(int i) const { return origin() + i * spacing(); }

  /// Per-axis indices of a flat index (unused axes are zero).
  std::array<int, 3> unravel(std::size_t flat) const;
  Vec3 position(std::size_t flat) const;

  /// Angular wavenumber of FFT index i (Nyquist index maps to -pi/dx).
  double wavenumber(int i) const;
  /// Wavenumber used for odd derivatives; zero at the Nyquist index.
  double derivative_wavenumber(int i) const;

  bool operator==(const GridSpec&) const = default;
};

bool is_power_of_two(long n);

/// In-place multidimensional complex FFT on a fixed grid. The backward
/// transform is normalized so that backward(forward(u)) == u.
class Fft {
 public:
  explicit Fft(const GridSpec& grid);
  ~Fft();
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;
  Fft(Fft&&) noexcept;
  Fft& operator=(Fft&&) noexcept;

  void forward(ComplexVec& data) const;
  void backward(ComplexVec& data) const;

  const GridSpec& grid() const { return grid_; }

 private:
  struct Plans;
  GridSpec grid_;
  std::unique_ptr<Plans> plans_;
};

/// Spectral calculus helpers on a periodic grid. All routines take physical
/// space fields and return physical space fields.
class Spectral {
 public:
  explicit Spectral(const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  const Fft& fft() const { return fft_; }

  /// |k|^2 for every flat index in FFT ordering.
  const RealVec& k_squared() const { return k2_; }
  /// Derivative wavenumber along `axis` for every flat index.
  const RealVec& k_axis(int axis) const { return kd_[axis]; }

  ComplexVec derivative(const ComplexVec& u, int axis) const;
  ComplexVec laplacian(const ComplexVec& u) const;
  /// Translate a field: returns u(x - shift) via Fourier phase factors.
  ComplexVec translate(const ComplexVec& u, const Vec3& shift) const;

 private:
  GridSpec grid_;
  Fft fft_;
  RealVec k2_;
  std::array<RealVec, 3> kd_;
};

/// Real L2 inner product <u,v> = Re ∫ u conj(v) dx.
double inner(const ComplexVec& u, const ComplexVec& v, const GridSpec& grid);
/// ∫ |u|^2 dx.
double l2_squared(const ComplexVec& u, const GridSpec& grid);

ComplexVec to_complex(std::span<const double> values);

}  // namespace solacc
