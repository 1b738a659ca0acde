#ifndef TPRT_GEOMETRY_HPP_
#define TPRT_GEOMETRY_HPP_
//! \file geometry.hpp
//  \brief Rectangular phase-space grids and exact ray-to-boundary tracing.
//
//  The domain is the axis-aligned rectangle [0,Lx] x [0,Ly] with cell-centered
//  spatial samples and a uniform set of unit direction ordinates on S^1.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace tprt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// Cell-centered discretization of [0,Lx] x [0,Ly]. Cell (i,j) has center
// ((i+1/2)dx, (j+1/2)dy), so every center is strictly interior.
class SpatialGrid {
 public:
  SpatialGrid(double Lx, double Ly, int nx, int ny)
      : Lx_(Lx), Ly_(Ly), nx_(nx), ny_(ny) {
    if (!(Lx > 0.0) || !(Ly > 0.0))
      throw std::invalid_argument("SpatialGrid: side lengths must be positive");
    if (nx < 2 || ny < 2)
      throw std::invalid_argument("SpatialGrid: need at least 2 cells per axis");
  }

  double Lx() const { return Lx_; }
  double Ly() const { return Ly_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double dx() const { return Lx_ / nx_; }
  double dy() const { return Ly_ / ny_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(nx_) * ny_; }
  double diameter() const { return std::hypot(Lx_, Ly_); }
  double cell_area() const { return dx() * dy(); }

  Vec2 center(int i, int j) const { return {(i + 0.5) * dx(), (j + 0.5) * dy()}; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }

  bool contains(Vec2 p) const {
    return p.x >= 0.0 && p.x <= Lx_ && p.y >= 0.0 && p.y <= Ly_;
  }
  bool strictly_inside(Vec2 p) const {
    return p.x > 0.0 && p.x < Lx_ && p.y > 0.0 && p.y < Ly_;
  }
  bool on_boundary(Vec2 p, double tol = 1e-12) const {
    if (!contains(p)) return false;
    return p.x < tol || p.x > Lx_ - tol || p.y < tol || p.y > Ly_ - tol;
  }

  // Outward unit normal of the boundary face nearest to p; p must lie on one face
  // (corners resolve to the face reached first in x).
  Vec2 outward_normal(Vec2 p, double tol = 1e-10) const {
    if (p.x <= tol) return {-1.0, 0.0};
    if (p.x >= Lx_ - tol) return {1.0, 0.0};
    if (p.y <= tol) return {0.0, -1.0};
    if (p.y >= Ly_ - tol) return {0.0, 1.0};
    throw std::invalid_argument("outward_normal: point is not on the boundary");
  }

  bool same_layout(const SpatialGrid& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && Lx_ == o.Lx_ && Ly_ == o.Ly_;
  }

 private:
  double Lx_, Ly_;
  int nx_, ny_;
};

// Uniform ordinates v_k = (cos t_k, sin t_k), t_k = 2 pi (k + 1/2) / n_v, with
// equal weights 1/n_v so the discrete angular measure is normalized exactly.
class AngularGrid {
 public:
  explicit AngularGrid(int n_v) : n_v_(n_v) {
    if (n_v < 1) throw std::invalid_argument("AngularGrid: need at least one ordinate");
    dirs_.reserve(n_v);
    for (int k = 0; k < n_v; ++k) {
      const double t = theta(k);
      dirs_.push_back({std::cos(t), std::sin(t)});
    }
  }

  int size() const { return n_v_; }
  double theta(int k) const { return 2.0 * std::numbers::pi * (k + 0.5) / n_v_; }
  Vec2 direction(int k) const { return dirs_[k]; }
  double weight() const { return 1.0 / n_v_; }

  bool same_layout(const AngularGrid& o) const { return n_v_ == o.n_v_; }

 private:
  int n_v_;
  std::vector<Vec2> dirs_;
};

struct BoundaryHit {
  double tau;   // distance to the boundary along -v
  Vec2 point;   // x - tau v, snapped exactly onto the exit face
};

// Distance a particle at x must travel in direction -v to leave the rectangle,
// together with the exit point. Unique because the domain is convex.
inline BoundaryHit trace_to_boundary(const SpatialGrid& grid, Vec2 x, Vec2 v) {
  if (!grid.contains(x))
    throw std::invalid_argument("trace_to_boundary: point outside the domain closure");
  if (std::abs(v.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("trace_to_boundary: direction must be a unit vector");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Moving along -v: coordinate a(s) = x - s v hits {0, L} at these s >= 0.
  double sx = kInf, sy = kInf;
  if (v.x > 0.0) sx = x.x / v.x;
  else if (v.x < 0.0) sx = (x.x - grid.Lx()) / v.x;
  if (v.y > 0.0) sy = x.y / v.y;
  else if (v.y < 0.0) sy = (x.y - grid.Ly()) / v.y;

  const double tau = std::min(sx, sy);
  Vec2 hit = x - tau * v;
  // Snap the exiting coordinate onto the face to keep the hit exactly on the boundary.
  if (sx <= sy) hit.x = (v.x > 0.0) ? 0.0 : grid.Lx();
  if (sy <= sx) hit.y = (v.y > 0.0) ? 0.0 : grid.Ly();
  hit.x = std::min(std::max(hit.x, 0.0), grid.Lx());
  hit.y = std::min(std::max(hit.y, 0.0), grid.Ly());
  return {tau, hit};
}

// Number of equal segments needed to cover [0, tau] with spacing <= step.
inline int ray_segments(double tau, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("ray_segments: step must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("ray_segments: degenerate ray (tau <= 0)");
  // The 1e-12 guard absorbs roundoff when tau is an exact multiple of step.
  const int n = static_cast<int>(std::ceil(tau / step - 1e-12));
  return n > 0 ? n : 1;
}

// Arc-length samples {0, ds, ..., tau} with uniform ds <= step.
inline std::vector<double> sample_ray(double tau, double step) {
  const int n = ray_segments(tau, step);
  const double ds = tau / n;
  std::vector<double> s(n + 1);
  for (int i = 0; i <= n; ++i) s[i] = i * ds;
  s.back() = tau;
  return s;
}

}  // namespace tprt

#endif  // TPRT_GEOMETRY_HPP_
