#ifndef TPRT_FIELDS_HPP_
#define TPRT_FIELDS_HPP_
//! \file fields.hpp
//  \brief Phase-space and scalar field storage, angular averaging, and the
//         scattering operator with its discrete kernel.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tprt/geometry.hpp"

namespace tprt {

// Discrete function of position only, one value per cell center.
class ScalarField {
 public:
  explicit ScalarField(const SpatialGrid& grid, double fill = 0.0)
      : grid_(grid), v_(grid.cell_count(), fill) {}

  static ScalarField from_function(const SpatialGrid& grid,
                                   const std::function<double(Vec2)>& f) {
    ScalarField out(grid);
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) out(i, j) = f(grid.center(i, j));
    return out;
  }

  const SpatialGrid& grid() const { return grid_; }
  std::size_t size() const { return v_.size(); }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator()(int i, int j) { return v_[grid_.index(i, j)]; }
  double operator()(int i, int j) const { return v_[grid_.index(i, j)]; }
  double& operator[](std::size_t idx) { return v_[idx]; }
  double operator[](std::size_t idx) const { return v_[idx]; }

  double min() const { return *std::min_element(v_.begin(), v_.end()); }
  double max() const { return *std::max_element(v_.begin(), v_.end()); }
  double sup_norm() const {
    double m = 0.0;
    for (const double x : v_) m = std::max(m, std::abs(x));
    return m;
  }
  // L2 norm with the cell-area measure.
  double l2_norm() const {
    double s = 0.0;
    for (const double x : v_) s += x * x;
    return std::sqrt(s * grid_.cell_area());
  }

  bool all_finite() const {
    for (const double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }
  void require_finite(const char* what) const {
    if (!all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite values");
  }

 private:
  SpatialGrid grid_;
  std::vector<double> v_;
};

inline ScalarField zip(const ScalarField& a, const ScalarField& b,
                       const std::function<double(double, double)>& op) {
  if (!a.grid().same_layout(b.grid()))
    throw std::invalid_argument("zip: fields live on different grids");
  ScalarField out(a.grid());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
  return out;
}

inline ScalarField map(const ScalarField& a, const std::function<double(double)>& op) {
  ScalarField out(a.grid());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i]);
  return out;
}

inline double sup_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Discrete function on the full phase space, layout [ordinate][y][x] so each
// ordinate slice is a contiguous spatial field.
class PhaseField {
 public:
  PhaseField(const SpatialGrid& grid, const AngularGrid& angles, double fill = 0.0)
      : grid_(grid), angles_(angles),
        v_(grid.cell_count() * angles.size(), fill) {}

  const SpatialGrid& grid() const { return grid_; }
  const AngularGrid& angles() const { return angles_; }
  std::size_t size() const { return v_.size(); }

  double& operator()(int i, int j, int k) { return v_[slice_offset(k) + grid_.index(i, j)]; }
  double operator()(int i, int j, int k) const { return v_[slice_offset(k) + grid_.index(i, j)]; }
  double& operator[](std::size_t idx) { return v_[idx]; }
  double operator[](std::size_t idx) const { return v_[idx]; }

  std::size_t slice_offset(int k) const { return static_cast<std::size_t>(k) * grid_.cell_count(); }
  double* slice(int k) { return v_.data() + slice_offset(k); }
  const double* slice(int k) const { return v_.data() + slice_offset(k); }

  double min() const { return *std::min_element(v_.begin(), v_.end()); }
  double max() const { return *std::max_element(v_.begin(), v_.end()); }

  bool all_finite() const {
    for (const double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

 private:
  SpatialGrid grid_;
  AngularGrid angles_;
  std::vector<double> v_;
};

inline double sup_diff(const PhaseField& a, const PhaseField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// <u>(x) = sum_k w_k u(x, v_k) with the normalized weights w_k = 1/n_v.
inline ScalarField angular_average(const PhaseField& u) {
  ScalarField out(u.grid());
  const int n_v = u.angles().size();
  const double w = u.angles().weight();
  for (int k = 0; k < n_v; ++k) {
    const double* s = u.slice(k);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += w * s[c];
  }
  return out;
}

// Clamped bilinear interpolation of a cell-centered field. Query points are
// clamped into the hull of cell centers, so boundary half-cells extrapolate
// the nearest center value; positive fields stay positive.
struct BilinearSampler {
  int nx, ny;
  double dx, dy, inv_dx, inv_dy;
  double x_lo, x_hi, y_lo, y_hi;

  explicit BilinearSampler(const SpatialGrid& g)
      : nx(g.nx()), ny(g.ny()), dx(g.dx()), dy(g.dy()),
        inv_dx(1.0 / g.dx()), inv_dy(1.0 / g.dy()),
        x_lo(0.5 * g.dx()), x_hi(g.Lx() - 0.5 * g.dx()),
        y_lo(0.5 * g.dy()), y_hi(g.Ly() - 0.5 * g.dy()) {}

  struct Stencil {
    std::size_t i00, i10, i01, i11;
    double w00, w10, w01, w11;
  };

  Stencil stencil(Vec2 p) const {
    const double px = std::min(std::max(p.x, x_lo), x_hi);
    const double py = std::min(std::max(p.y, y_lo), y_hi);
    const double fx = (px - x_lo) * inv_dx;
    const double fy = (py - y_lo) * inv_dy;
    int i0 = static_cast<int>(fx);
    int j0 = static_cast<int>(fy);
    if (i0 > nx - 2) i0 = nx - 2;
    if (j0 > ny - 2) j0 = ny - 2;
    const double tx = fx - i0;
    const double ty = fy - j0;
    const std::size_t base = static_cast<std::size_t>(j0) * nx + i0;
    Stencil s;
    s.i00 = base;
    s.i10 = base + 1;
    s.i01 = base + nx;
    s.i11 = base + nx + 1;
    s.w00 = (1.0 - tx) * (1.0 - ty);
    s.w10 = tx * (1.0 - ty);
    s.w01 = (1.0 - tx) * ty;
    s.w11 = tx * ty;
    return s;
  }

  static double apply(const double* field, const Stencil& s) {
    return s.w00 * field[s.i00] + s.w10 * field[s.i10] +
           s.w01 * field[s.i01] + s.w11 * field[s.i11];
  }
};

inline double interpolate(const ScalarField& f, Vec2 p) {
  const BilinearSampler smp(f.grid());
  return BilinearSampler::apply(f.data(), smp.stencil(p));
}

// Symmetric, doubly normalized scattering kernel on the ordinate set:
// Theta_kl = Theta_lk, sum_l w_l Theta_kl = 1 for every row k.
class ScatteringKernel {
 public:
  static ScatteringKernel isotropic(int n_v) {
    ScatteringKernel k;
    k.n_v_ = n_v;
    k.coeff_.assign(static_cast<std::size_t>(n_v) * n_v, 1.0);
    k.row_scale_.assign(n_v, 1.0);
    k.g_ = 0.0;
    k.finalize();
    return k;
  }

  // Henyey-Greenstein-like profile P(cos) = (1-g^2)/(1+g^2-2g cos), which has
  // unit continuum normalization in 2D; rows are renormalized so the discrete
  // quadrature sums are exactly one, then symmetrized.
  static ScatteringKernel peaked(int n_v, double g) {
    if (!(g >= 0.0) || !(g < 1.0))
      throw std::invalid_argument("ScatteringKernel::peaked: need 0 <= g < 1");
    ScatteringKernel k;
    k.n_v_ = n_v;
    k.g_ = g;
    k.coeff_.resize(static_cast<std::size_t>(n_v) * n_v);
    const AngularGrid angles(n_v);
    for (int a = 0; a < n_v; ++a)
      for (int b = 0; b < n_v; ++b)
        k.coeff_[a * static_cast<std::size_t>(n_v) + b] =
            profile(g, angles.direction(a).dot(angles.direction(b)));
    k.normalize();
    k.finalize();
    return k;
  }

  int size() const { return n_v_; }
  double operator()(int k, int l) const { return coeff_[static_cast<std::size_t>(k) * n_v_ + l]; }
  double theta_min() const { return theta_min_; }
  double theta_max() const { return theta_max_; }
  bool is_isotropic() const { return isotropic_; }

  // Kernel value against an arbitrary beam direction (not necessarily an
  // ordinate), using the continuous profile with the row's discrete scaling.
  double eval_beam(int k, Vec2 beam) const {
    if (isotropic_) return 1.0;
    const AngularGrid angles(n_v_);
    return row_scale_[k] * profile(g_, angles.direction(k).dot(beam));
  }

  void validate(double tol = 1e-10) const {
    const double w = 1.0 / n_v_;
    for (int a = 0; a < n_v_; ++a) {
      double row = 0.0;
      for (int b = 0; b < n_v_; ++b) {
        row += w * (*this)(a, b);
        if (std::abs((*this)(a, b) - (*this)(b, a)) > tol)
          throw std::invalid_argument("ScatteringKernel: symmetry violated");
      }
      if (std::abs(row - 1.0) > tol)
        throw std::invalid_argument("ScatteringKernel: row normalization violated");
    }
    if (!(theta_min_ > 0.0))
      throw std::invalid_argument("ScatteringKernel: kernel must be strictly positive");
  }

 private:
  static double profile(double g, double cosangle) {
    return (1.0 - g * g) / (1.0 + g * g - 2.0 * g * cosangle);
  }

  void normalize() {
    const double w = 1.0 / n_v_;
    row_scale_.assign(n_v_, 1.0);
    // Row renormalization, symmetrization, and a final renormalization pass;
    // for uniform ordinates the profile matrix is circulant, so this settles
    // to 1e-12 immediately. A few extra rounds cover non-circulant inputs.
    for (int round = 0; round < 8; ++round) {
      double worst = 0.0;
      for (int a = 0; a < n_v_; ++a) {
        double row = 0.0;
        for (int b = 0; b < n_v_; ++b) row += w * coeff_[a * static_cast<std::size_t>(n_v_) + b];
        worst = std::max(worst, std::abs(row - 1.0));
        const double s = 1.0 / row;
        row_scale_[a] *= s;
        for (int b = 0; b < n_v_; ++b) coeff_[a * static_cast<std::size_t>(n_v_) + b] *= s;
      }
      for (int a = 0; a < n_v_; ++a)
        for (int b = a + 1; b < n_v_; ++b) {
          const std::size_t ab = a * static_cast<std::size_t>(n_v_) + b;
          const std::size_t ba = b * static_cast<std::size_t>(n_v_) + a;
          const double m = 0.5 * (coeff_[ab] + coeff_[ba]);
          coeff_[ab] = coeff_[ba] = m;
        }
      if (worst < 1e-12 && round > 0) break;
    }
  }

  void finalize() {
    theta_min_ = *std::min_element(coeff_.begin(), coeff_.end());
    theta_max_ = *std::max_element(coeff_.begin(), coeff_.end());
    isotropic_ = (theta_max_ - theta_min_) < 1e-14;
    validate();
  }

  int n_v_ = 0;
  double g_ = 0.0;
  std::vector<double> coeff_;
  std::vector<double> row_scale_;
  double theta_min_ = 1.0, theta_max_ = 1.0;
  bool isotropic_ = true;
};

inline ScatteringKernel build_kernel_isotropic(int n_v) { return ScatteringKernel::isotropic(n_v); }
inline ScatteringKernel build_kernel_peaked(int n_v, double g) { return ScatteringKernel::peaked(n_v, g); }

// (K u)(x, v_k) = sum_l w_l Theta_kl u(x, v_l): preserves constants and
// non-negativity, and conserves the angular average by column normalization.
inline PhaseField apply_scattering(const ScatteringKernel& kernel, const PhaseField& u) {
  const int n_v = u.angles().size();
  if (kernel.size() != n_v)
    throw std::invalid_argument("apply_scattering: kernel/ordinate mismatch");
  PhaseField out(u.grid(), u.angles());
  const double w = u.angles().weight();
  if (kernel.is_isotropic()) {
    const ScalarField avg = angular_average(u);
    for (int k = 0; k < n_v; ++k) {
      double* dst = out.slice(k);
      for (std::size_t c = 0; c < avg.size(); ++c) dst[c] = avg[c];
    }
    return out;
  }
  for (int k = 0; k < n_v; ++k) {
    double* dst = out.slice(k);
    for (int l = 0; l < n_v; ++l) {
      const double wkl = w * kernel(k, l);
      const double* src = u.slice(l);
      for (std::size_t c = 0; c < u.grid().cell_count(); ++c) dst[c] += wkl * src[c];
    }
  }
  return out;
}

struct CoefficientBounds {
  double sigma_a_lo = 0.0, sigma_a_hi = 0.0;
  double sigma_b_lo = 0.0, sigma_b_hi = 0.0;
  double sigma_s_lo = 0.0, sigma_s_hi = 0.0;
};

// The optical coefficient triple with its kernel and declared a-priori bounds.
// sigma_a must be bounded away from zero; sigma_s may vanish identically (the
// free-transport regime); sigma_b may vanish on subsets (point-source setups
// require a clear disc around the source).
class CoefficientSet {
 public:
  CoefficientSet(ScalarField sigma_a, ScalarField sigma_b, ScalarField sigma_s,
                 ScatteringKernel kernel, CoefficientBounds bounds)
      : sigma_a_(std::move(sigma_a)), sigma_b_(std::move(sigma_b)),
        sigma_s_(std::move(sigma_s)), kernel_(std::move(kernel)), bounds_(bounds) {
    validate();
  }

  const ScalarField& sigma_a() const { return sigma_a_; }
  const ScalarField& sigma_b() const { return sigma_b_; }
  const ScalarField& sigma_s() const { return sigma_s_; }
  const ScatteringKernel& kernel() const { return kernel_; }
  const CoefficientBounds& bounds() const { return bounds_; }
  const SpatialGrid& grid() const { return sigma_a_.grid(); }

  bool has_scattering() const { return sigma_s_.max() > 0.0; }
  bool has_two_photon() const { return sigma_b_.max() > 0.0; }

  void validate() const {
    sigma_a_.require_finite("sigma_a");
    sigma_b_.require_finite("sigma_b");
    sigma_s_.require_finite("sigma_s");
    if (!sigma_a_.grid().same_layout(sigma_b_.grid()) ||
        !sigma_a_.grid().same_layout(sigma_s_.grid()))
      throw std::invalid_argument("CoefficientSet: fields on different grids");
    check_range("sigma_a", sigma_a_, bounds_.sigma_a_lo, bounds_.sigma_a_hi);
    check_range("sigma_b", sigma_b_, bounds_.sigma_b_lo, bounds_.sigma_b_hi);
    check_range("sigma_s", sigma_s_, bounds_.sigma_s_lo, bounds_.sigma_s_hi);
    if (!(bounds_.sigma_a_lo > 0.0))
      throw std::invalid_argument("CoefficientSet: sigma_a lower bound must be positive");
    if (sigma_s_.max() > 0.0 && !(bounds_.sigma_s_lo > 0.0))
      throw std::invalid_argument(
          "CoefficientSet: sigma_s lower bound must be positive unless sigma_s == 0");
  }

 private:
  static void check_range(const char* name, const ScalarField& f, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument(std::string(name) + ": bounds out of order");
    constexpr double tol = 1e-12;
    if (f.min() < lo - tol || f.max() > hi + tol)
      throw std::invalid_argument(std::string(name) + ": field violates declared bounds");
  }

  ScalarField sigma_a_, sigma_b_, sigma_s_;
  ScatteringKernel kernel_;
  CoefficientBounds bounds_;
};

}  // namespace tprt

#endif  // TPRT_FIELDS_HPP_
