#ifndef TPRT_PHANTOM_HPP_
#define TPRT_PHANTOM_HPP_
//! \file phantom.hpp
//  \brief Test media: constant, smooth Gaussian-inclusion, and checkerboard
//         coefficient sets, all carrying exact declared bounds.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tprt/fields.hpp"
#include "tprt/geometry.hpp"
#include "tprt/rng.hpp"

namespace tprt {

struct GaussianBump {
  double cx = 0.5, cy = 0.5;
  double width = 0.15;
};

// Optional disc on which sigma_b is forced to zero (point-source setups); the
// transition to the background profile is C^2 (quintic smoothstep) between
// radius and 1.5 * radius.
struct ClearDisc {
  Vec2 center;
  double radius = 0.0;
};

struct PhantomSpec {
  enum class Kind { constant, gaussian_inclusions, checkerboard };
  Kind kind = Kind::constant;

  // constant: the background alone; gaussian: background + amplitude * bump
  // profile normalized to peak 1; checkerboard: background/high tile values.
  double sigma_a_bg = 1.0, sigma_a_amp = 0.0;
  double sigma_b_bg = 0.5, sigma_b_amp = 0.0;
  double sigma_s_bg = 0.0, sigma_s_amp = 0.0;
  std::vector<GaussianBump> bumps;
  int tiles = 4;
  ClearDisc sigma_b_clear;  // radius 0 = disabled
};

namespace detail {

inline double smoothstep5(double t) {
  t = std::min(std::max(t, 0.0), 1.0);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

inline ScalarField bump_profile(const SpatialGrid& grid, const std::vector<GaussianBump>& bumps) {
  ScalarField b(grid);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      const Vec2 x = grid.center(i, j);
      double s = 0.0;
      for (const GaussianBump& g : bumps) {
        const double rx = (x.x - g.cx * grid.Lx()) / g.width;
        const double ry = (x.y - g.cy * grid.Ly()) / g.width;
        s += std::exp(-0.5 * (rx * rx + ry * ry));
      }
      b(i, j) = s;
    }
  const double peak = b.max();
  if (peak > 0.0)
    for (std::size_t c = 0; c < b.size(); ++c) b[c] /= peak;
  return b;
}

inline double checker(const SpatialGrid& grid, Vec2 x, int tiles) {
  const int ix = std::min(static_cast<int>(x.x / grid.Lx() * tiles), tiles - 1);
  const int iy = std::min(static_cast<int>(x.y / grid.Ly() * tiles), tiles - 1);
  return ((ix + iy) % 2 == 0) ? 0.0 : 1.0;
}

}  // namespace detail

// Builds the coefficient set on the given grid; declared bounds are the exact
// grid extrema, so validation is tight by construction.
inline CoefficientSet make_phantom(const PhantomSpec& spec, const SpatialGrid& grid,
                                   const ScatteringKernel& kernel) {
  ScalarField sa(grid, spec.sigma_a_bg);
  ScalarField sb(grid, spec.sigma_b_bg);
  ScalarField ss(grid, spec.sigma_s_bg);

  switch (spec.kind) {
    case PhantomSpec::Kind::constant:
      break;
    case PhantomSpec::Kind::gaussian_inclusions: {
      if (spec.bumps.empty())
        throw std::invalid_argument("make_phantom: gaussian-inclusions needs at least one bump");
      for (const GaussianBump& g : spec.bumps)
        if (!(g.width > 0.0)) throw std::invalid_argument("make_phantom: bump width <= 0");
      const ScalarField b = detail::bump_profile(grid, spec.bumps);
      for (std::size_t c = 0; c < sa.size(); ++c) {
        sa[c] += spec.sigma_a_amp * b[c];
        sb[c] += spec.sigma_b_amp * b[c];
        ss[c] += spec.sigma_s_amp * b[c];
      }
      break;
    }
    case PhantomSpec::Kind::checkerboard: {
      if (spec.tiles < 1) throw std::invalid_argument("make_phantom: tiles < 1");
      for (int j = 0; j < grid.ny(); ++j)
        for (int i = 0; i < grid.nx(); ++i) {
          const double t = detail::checker(grid, grid.center(i, j), spec.tiles);
          sa(i, j) += spec.sigma_a_amp * t;
          sb(i, j) += spec.sigma_b_amp * t;
          ss(i, j) += spec.sigma_s_amp * t;
        }
      break;
    }
  }

  if (spec.sigma_b_clear.radius > 0.0) {
    const double r0 = spec.sigma_b_clear.radius;
    const double r1 = 1.5 * r0;
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) {
        const double r = (grid.center(i, j) - spec.sigma_b_clear.center).norm();
        if (r <= r0) sb(i, j) = 0.0;
        else if (r < r1) sb(i, j) *= detail::smoothstep5((r - r0) / (r1 - r0));
      }
  }

  CoefficientBounds bounds;
  bounds.sigma_a_lo = sa.min();
  bounds.sigma_a_hi = sa.max();
  bounds.sigma_b_lo = sb.min();
  bounds.sigma_b_hi = sb.max();
  bounds.sigma_s_lo = ss.min();
  bounds.sigma_s_hi = ss.max();
  return CoefficientSet(std::move(sa), std::move(sb), std::move(ss), kernel, bounds);
}

// Randomized smooth phantom within the given value ranges; every draw comes
// from the named substream of the run seed.
struct RandomPhantomRanges {
  double sigma_a_min = 0.8, sigma_a_max = 1.4;
  double sigma_b_min = 0.2, sigma_b_max = 0.6;
  double sigma_s_min = 0.0, sigma_s_max = 1.5;
  int max_bumps = 3;
};

inline PhantomSpec random_phantom_spec(Rng& rng, const RandomPhantomRanges& ranges) {
  PhantomSpec spec;
  spec.kind = PhantomSpec::Kind::gaussian_inclusions;
  spec.sigma_a_bg = rng.uniform(ranges.sigma_a_min, 0.5 * (ranges.sigma_a_min + ranges.sigma_a_max));
  spec.sigma_a_amp = rng.uniform(0.0, ranges.sigma_a_max - spec.sigma_a_bg);
  spec.sigma_b_bg = rng.uniform(ranges.sigma_b_min, 0.5 * (ranges.sigma_b_min + ranges.sigma_b_max));
  spec.sigma_b_amp = rng.uniform(0.0, ranges.sigma_b_max - spec.sigma_b_bg);
  const double s_lo = ranges.sigma_s_min;
  spec.sigma_s_bg = s_lo > 0.0 ? rng.uniform(s_lo, 0.5 * (s_lo + ranges.sigma_s_max)) : 0.0;
  spec.sigma_s_amp =
      spec.sigma_s_bg > 0.0 ? rng.uniform(0.0, ranges.sigma_s_max - spec.sigma_s_bg) : 0.0;
  const int n_bumps = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(ranges.max_bumps)));
  for (int b = 0; b < n_bumps; ++b) {
    GaussianBump bump;
    bump.cx = rng.uniform(0.25, 0.75);
    bump.cy = rng.uniform(0.25, 0.75);
    bump.width = rng.uniform(0.08, 0.2);
    spec.bumps.push_back(bump);
  }
  return spec;
}

}  // namespace tprt

#endif  // TPRT_PHANTOM_HPP_
