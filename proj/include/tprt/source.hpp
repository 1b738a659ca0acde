#ifndef TPRT_SOURCE_HPP_
#define TPRT_SOURCE_HPP_
//! \file source.hpp
//  \brief Boundary illumination types: general bounded and collimated sources.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

#include "tprt/geometry.hpp"

namespace tprt {

// Bounded inflow data g(x, v) on the incoming boundary, with cached inf/sup.
// The bounds are part of the type because admissibility and all a-priori
// estimates consume them.
class GeneralSource {
 public:
  using Fn = std::function<double(Vec2, Vec2)>;

  GeneralSource(Fn fn, double inf_value, double sup_value)
      : fn_(std::move(fn)), inf_(inf_value), sup_(sup_value) {
    if (!(inf_ <= sup_)) throw std::invalid_argument("GeneralSource: inf > sup");
  }

  static GeneralSource constant(double value) {
    GeneralSource g([value](Vec2, Vec2) { return value; }, value, value);
    g.constant_value_ = value;
    g.is_constant_ = true;
    return g;
  }

  double operator()(Vec2 boundary_point, Vec2 inward_direction) const {
    if (is_constant_) return constant_value_;
    return fn_(boundary_point, inward_direction);
  }

  double inf() const { return inf_; }
  double sup() const { return sup_; }
  bool is_constant() const { return is_constant_; }

 private:
  Fn fn_;
  double inf_, sup_;
  bool is_constant_ = false;
  double constant_value_ = 0.0;
};

// Boundary beam profile times an angular delta: g(x, v) = profile(x) d(v - beam).
// The delta is with respect to the normalized angular measure, so the angular
// average of the unscattered component is the profile itself.
class CollimatedSource {
 public:
  using Profile = std::function<double(Vec2)>;

  CollimatedSource(Profile profile, Vec2 beam, double profile_sup)
      : profile_(std::move(profile)), beam_(beam), sup_(profile_sup) {
    if (std::abs(beam_.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("CollimatedSource: beam direction must be unit");
    if (!(sup_ >= 0.0)) throw std::invalid_argument("CollimatedSource: negative sup");
  }

  static CollimatedSource uniform(double strength, Vec2 beam) {
    return CollimatedSource([strength](Vec2) { return strength; }, beam, strength);
  }

  double profile(Vec2 boundary_point) const { return profile_(boundary_point); }
  Vec2 beam() const { return beam_; }
  double sup() const { return sup_; }

  // The beam must be inward wherever the profile is positive; callers check
  // per entry point since the support is not enumerated here.
  bool inward_at(const SpatialGrid& grid, Vec2 boundary_point) const {
    return -grid.outward_normal(boundary_point).dot(beam_) > 0.0;
  }

 private:
  Profile profile_;
  Vec2 beam_;
  double sup_;
};

// Point illumination at a boundary site with constant angular strength.
// The two-photon coefficient must vanish within `clear_radius` of the site.
struct PointSource {
  Vec2 site;
  double strength = 0.0;
  double clear_radius = 0.0;
};

}  // namespace tprt

#endif  // TPRT_SOURCE_HPP_
