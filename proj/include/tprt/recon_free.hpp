#ifndef TPRT_RECON_FREE_HPP_
#define TPRT_RECON_FREE_HPP_
//! \file recon_free.hpp
//  \brief Explicit reconstruction of (sigma_a, sigma_b) in non-scattering
//         media from two collimated or two point-source data sets.
//
//  Along each beam chord the density phi(t) obeys phi' = -H, so it is
//  recovered by a cumulative trapezoid of the datum from the entry point:
//      phi(t) = profile(entry) - int_0^t H ds            (collimated)
//      phi(t) = t^-1 (strength |n.v| - int_0^t H(s) s ds) (point source, d=2).
//  The pointwise 2x2 system sigma_a phi_j + sigma_b phi_j^2 = H_j then yields
//  the coefficient pair wherever the two densities separate.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tprt/data_synthesis.hpp"
#include "tprt/fields.hpp"
#include "tprt/geometry.hpp"
#include "tprt/parallel.hpp"
#include "tprt/source.hpp"

namespace tprt {

class DataInconsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DensityRecovery {
  ScalarField phi;
  std::vector<std::uint8_t> mask;  // 1 = declined (non-positive density or excluded)
  std::size_t masked_cells = 0;
  std::size_t inconsistent_cells = 0;  // density below -1e-10: data inconsistent with the model

  bool masked(std::size_t c) const { return mask[c] != 0; }
};

// Recover the density along the beam family: each reconstruction cell traces
// backwards to the boundary and accumulates the datum along its own ray, so
// every cell receives a value and no deposition artifacts arise.
inline DensityRecovery recover_density_collimated(const InternalDatum& datum,
                                                  const CollimatedSource& src, double step) {
  const SpatialGrid& grid = datum.H.grid();
  const BilinearSampler smp(grid);
  DensityRecovery out{ScalarField(grid), std::vector<std::uint8_t>(grid.cell_count(), 0), 0, 0};
  constexpr double kInconsistencyTol = -1e-10;

  parallel_for(static_cast<std::size_t>(grid.ny()), [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    for (int i = 0; i < grid.nx(); ++i) {
      const Vec2 x = grid.center(i, j);
      const BoundaryHit hit = trace_to_boundary(grid, x, src.beam());
      const int n = ray_segments(hit.tau, step);
      const double ds = hit.tau / n;
      // march from the entry point towards the cell
      double integral = 0.0;
      double h_prev = BilinearSampler::apply(datum.H.data(), smp.stencil(hit.point));
      for (int s = 1; s <= n; ++s) {
        const Vec2 p = hit.point + (s * ds) * src.beam();
        const double h = BilinearSampler::apply(datum.H.data(), smp.stencil(p));
        integral += 0.5 * ds * (h_prev + h);
        h_prev = h;
      }
      const double phi = src.profile(hit.point) - integral;
      const std::size_t c = grid.index(i, j);
      out.phi[c] = phi;
      if (!(phi > 0.0)) out.mask[c] = 1;
      if (phi < kInconsistencyTol) out.mask[c] = 2;
    }
  });
  for (std::size_t c = 0; c < out.mask.size(); ++c) {
    if (out.mask[c]) ++out.masked_cells;
    if (out.mask[c] == 2) {
      ++out.inconsistent_cells;
      out.mask[c] = 1;
    }
  }
  return out;
}

// Point-source variant. The datum behaves like strength |n.v| / t near the
// site, so the weighted integrand H(s) s is evaluated through the
// angle-reduced field
//     Ghat(x) = H(x) |x - site|^2 / |n(site).(x - site)|,
// which divides out both the 1/t spreading and the leading incidence factor
// and is therefore smooth enough for bilinear interpolation; each sample
// multiplies back the exact per-ray incidence. Cells closer to the site than
// exclusion_radius are excluded, and so are rays more tangent to the boundary
// than min_incidence: gridded data near the site only resolves angles to
// h / r, which leaves near-tangent rays unrecoverable.
//
// The first stretch [0, s_b] of every ray is integrated through the local
// absorption balance G = sigma_a chi, chi' = -G (the two-photon term vanishes
// there), anchored at the interpolated value at s_b.
inline DensityRecovery recover_density_point(const InternalDatum& datum, const PointSource& src,
                                             double exclusion_radius, double step,
                                             double min_incidence = 0.0) {
  const SpatialGrid& grid = datum.H.grid();
  if (!grid.on_boundary(src.site, 1e-9))
    throw std::invalid_argument("recover_density_point: site must lie on the boundary");
  const Vec2 n_out = grid.outward_normal(src.site);
  constexpr double kInconsistencyTol = -1e-10;

  ScalarField reduced(grid);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      const Vec2 d = grid.center(i, j) - src.site;
      const double t = d.norm();
      const double along = std::abs(n_out.dot(d));
      reduced(i, j) = datum.H(i, j) * t * t / std::max(along, 1e-300);
    }

  const BilinearSampler smp(grid);
  const double s_anchor = 2.5 * std::max(grid.dx(), grid.dy());
  DensityRecovery out{ScalarField(grid), std::vector<std::uint8_t>(grid.cell_count(), 0), 0, 0};

  parallel_for(static_cast<std::size_t>(grid.ny()), [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    for (int i = 0; i < grid.nx(); ++i) {
      const std::size_t c = grid.index(i, j);
      const Vec2 x = grid.center(i, j);
      const Vec2 d = x - src.site;
      const double t = d.norm();
      if (t < exclusion_radius) {
        out.mask[c] = 1;
        continue;
      }
      const Vec2 v{d.x / t, d.y / t};
      const double incidence = std::abs(n_out.dot(v));
      if (incidence < min_incidence) {
        out.mask[c] = 1;
        continue;
      }
      const double chi0 = src.strength * incidence;
      // weighted integrand along this ray: G(s) = incidence * Ghat(site + s v)
      const auto sample = [&](double s) {
        return incidence * BilinearSampler::apply(reduced.data(), smp.stencil(src.site + s * v));
      };

      // near-source stretch from the local absorption balance
      const double s_b = std::min(s_anchor, 0.5 * t);
      const double g_b = sample(s_b);
      double lead = 0.0;
      for (int pass = 0; pass < 2; ++pass) {
        const double chi_b = std::max(chi0 - lead, 1e-300);
        const double z = g_b / chi_b;  // local absorption estimate at s_b
        lead = s_b * z * chi0 / (1.0 + 0.5 * s_b * z);
      }

      const int n = ray_segments(t - s_b, step);
      const double ds = (t - s_b) / n;
      double integral = lead;
      double g_prev = g_b;
      for (int s = 1; s <= n; ++s) {
        const double gval = sample(s_b + s * ds);
        integral += 0.5 * ds * (g_prev + gval);
        g_prev = gval;
      }
      const double phi = (chi0 - integral) / t;
      out.phi[c] = phi;
      if (!(phi > 0.0)) out.mask[c] = 1;
      if (phi < kInconsistencyTol) out.mask[c] = 2;
    }
  });
  for (std::size_t c = 0; c < out.mask.size(); ++c) {
    if (out.mask[c]) ++out.masked_cells;
    if (out.mask[c] == 2) {
      ++out.inconsistent_cells;
      out.mask[c] = 1;
    }
  }
  return out;
}

struct ReconPair {
  ScalarField sigma_a_rec;
  ScalarField sigma_b_rec;
  ScalarField conditioning;        // |phi_1 - phi_2| per cell
  std::vector<std::uint8_t> mask;  // 1 = inversion declined
  std::size_t masked_cells = 0;

  double masked_fraction() const {
    return static_cast<double>(masked_cells) / static_cast<double>(mask.size());
  }
  bool masked(std::size_t c) const { return mask[c] != 0; }
};

// Per cell, solve [phi1 phi1^2; phi2 phi2^2] (sigma_a, sigma_b)^T = (H1, H2)^T.
// The determinant is phi1 phi2 (phi2 - phi1); cells with |phi1 - phi2| below
// det_floor (or already-masked densities) are declined and recorded.
inline ReconPair solve_pointwise_pair(const DensityRecovery& rec1, const DensityRecovery& rec2,
                                      const InternalDatum& H1, const InternalDatum& H2,
                                      double det_floor) {
  const SpatialGrid& grid = rec1.phi.grid();
  if (!grid.same_layout(rec2.phi.grid()) || !grid.same_layout(H1.H.grid()) ||
      !grid.same_layout(H2.H.grid()))
    throw std::invalid_argument("solve_pointwise_pair: fields not co-registered");

  ReconPair out{ScalarField(grid), ScalarField(grid), ScalarField(grid),
                std::vector<std::uint8_t>(grid.cell_count(), 0), 0};
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const double p1 = rec1.phi[c];
    const double p2 = rec2.phi[c];
    out.conditioning[c] = std::abs(p1 - p2);
    if (rec1.masked(c) || rec2.masked(c) || out.conditioning[c] < det_floor) {
      out.mask[c] = 1;
      ++out.masked_cells;
      continue;
    }
    const double r1 = H1.H[c] / p1;
    const double r2 = H2.H[c] / p2;
    const double sb = (r2 - r1) / (p2 - p1);
    out.sigma_b_rec[c] = sb;
    out.sigma_a_rec[c] = r1 - sb * p1;
  }
  if (out.masked_cells == out.mask.size())
    throw DataInconsistencyError("solve_pointwise_pair: every cell was masked");
  return out;
}

}  // namespace tprt

#endif  // TPRT_RECON_FREE_HPP_
