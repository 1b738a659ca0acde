#ifndef TPRT_ISOTROPIC_ORACLE_HPP_
#define TPRT_ISOTROPIC_ORACLE_HPP_
//! \file isotropic_oracle.hpp
//  \brief Integral-equation formulation for isotropic scattering and constant
//         boundary data: path exponentials, the operators J_m and K_m, the
//         monotone density map, and computable uniqueness/stability constants.
//
//  With Theta == 1 and g == gbar the density of the datum-defined transport
//  problem solves <u> = J_m gbar + K_m(sigma_s <u>) at m = <u>, where both
//  operators attenuate along rays with extinction H/m + sigma_s. This gives an
//  independent route to the same density the characteristics solver produces,
//  plus explicit constants certifying uniqueness of the reconstruction.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tprt/data_synthesis.hpp"
#include "tprt/fields.hpp"
#include "tprt/recon_scatter.hpp"
#include "tprt/transport_linear.hpp"

namespace tprt {

namespace detail {

// Extinction H/m + sigma_s with the same floor policy as the reconstruction.
inline ScalarField ratio_extinction(const ScalarField& m, const ScalarField& H,
                                    const ScalarField& sigma_s) {
  if (!(m.min() > 0.0))
    throw std::invalid_argument("isotropic oracle: density argument must be positive");
  ScalarField out(H.grid());
  for (std::size_t c = 0; c < out.size(); ++c) {
    double ratio = H[c] / m[c];
    if (H[c] <= 0.0) ratio = kAbsorptionFloor;
    out[c] = ratio + sigma_s[c];
  }
  return out;
}

}  // namespace detail

// E_m(x, l, v) = exp(-int_0^l (H/m + sigma_s)(x - s v) ds), in (0, 1].
inline double path_exponential(const ScalarField& m, const ScalarField& H,
                               const ScalarField& sigma_s, Vec2 x, Vec2 v, double l,
                               double step = 1e-3) {
  const ScalarField sigma_t = detail::ratio_extinction(m, H, sigma_s);
  if (l == 0.0) return 1.0;
  const BoundaryHit hit = trace_to_boundary(H.grid(), x, v);
  if (l < 0.0 || l > hit.tau + 1e-12)
    throw std::invalid_argument("path_exponential: l must lie in [0, tau]");
  const BilinearSampler smp(H.grid());
  return detail::integrate_ray(smp, sigma_t.data(), nullptr, x, v, std::min(l, hit.tau), step)
      .attenuation;
}

// (J_m gbar)(x) = gbar sum_k w_k E_m(x, tau(x,v_k), v_k): the angularly
// averaged attenuated inflow. Monotone increasing in m.
inline ScalarField apply_J(const ScalarField& m, const ScalarField& H, const ScalarField& sigma_s,
                           double g_bar, const AngularGrid& angles, double step = 1e-3) {
  const ScalarField sigma_t = detail::ratio_extinction(m, H, sigma_s);
  const GeneralSource g = GeneralSource::constant(g_bar);
  return angular_average(ballistic_solution(H.grid(), angles, sigma_t, g, step));
}

// (K_m f)(x) = sum_k w_k int_0^tau E_m(x, l, v_k) f(x - l v_k) dl, evaluated by
// lifting the direction-independent source and averaging, so it shares one
// quadrature implementation with the transport solver.
inline ScalarField apply_K(const ScalarField& m, const ScalarField& H, const ScalarField& sigma_s,
                           const ScalarField& f, const AngularGrid& angles, double step = 1e-3) {
  const ScalarField sigma_t = detail::ratio_extinction(m, H, sigma_s);
  PhaseField q(H.grid(), angles);
  for (int k = 0; k < angles.size(); ++k) {
    double* dst = q.slice(k);
    for (std::size_t c = 0; c < f.size(); ++c) dst[c] = f[c];
  }
  return angular_average(lift_source(sigma_t, q, step));
}

struct DensityMapResult {
  ScalarField m_star;
  int iterations = 0;
  std::vector<double> gap_history;
  std::vector<double> max_increase;
  std::vector<double> max_decrease;
};

// Iterate the density map m -> <u(m)>, u(m) the solution of the linear
// transport problem with absorption H/m, isotropic scattering sigma_s, and
// constant inflow gbar. Monotone: non-increasing from m0 = gbar, non-decreasing
// from m0 = eta when the map dominates eta.
inline DensityMapResult iterate_density_map(const ScalarField& m0, const ScalarField& H,
                                            const ScalarField& sigma_s, double g_bar, int n_v,
                                            const LinearSolveConfig& inner, double tol,
                                            int max_iters) {
  if (!(tol > 0.0) || max_iters < 1)
    throw std::invalid_argument("iterate_density_map: bad iteration controls");
  const SpatialGrid& grid = H.grid();
  const ScatteringKernel kernel = ScatteringKernel::isotropic(n_v);
  const AngularGrid angles(n_v);
  const GeneralSource g = GeneralSource::constant(g_bar);

  DensityMapResult res{m0, 0, {}, {}, {}};
  ScalarField m = m0;
  const PhaseField* warm = nullptr;
  PhaseField u_prev(grid, angles);
  int consecutive_growth = 0;
  for (int it = 1; it <= max_iters; ++it) {
    ScalarField sigma(grid);
    for (std::size_t c = 0; c < sigma.size(); ++c) {
      const double dens = std::max(m[c], kAbsorptionFloor);
      sigma[c] = std::max(H[c] / dens, kAbsorptionFloor);
    }
    LinearSolveResult lin = solve_linear(sigma, sigma_s, kernel, g, angles, inner, warm);
    ScalarField m_next = angular_average(lin.u);
    double gap = 0.0, inc = 0.0, dec = 0.0;
    for (std::size_t c = 0; c < m.size(); ++c) {
      const double d = m_next[c] - m[c];
      gap = std::max(gap, std::abs(d));
      inc = std::max(inc, d);
      dec = std::max(dec, -d);
    }
    res.gap_history.push_back(gap);
    res.max_increase.push_back(inc);
    res.max_decrease.push_back(dec);
    res.iterations = it;
    u_prev = std::move(lin.u);
    warm = &u_prev;
    m = std::move(m_next);
    if (res.gap_history.size() >= 2 &&
        gap > res.gap_history[res.gap_history.size() - 2] * (1.0 + 1e-12)) {
      if (++consecutive_growth >= 5)
        throw ConvergenceError("iterate_density_map: diverging", gap, res.gap_history);
    } else {
      consecutive_growth = 0;
    }
    if (gap < tol) {
      res.m_star = std::move(m);
      return res;
    }
  }
  throw ConvergenceError("iterate_density_map: max_iters exceeded", res.gap_history.back(),
                         res.gap_history);
}

// psi of the uniqueness criterion: the reconstruction density map has a unique
// fixed point when psi <= inf eta (for domains with diameter <= 1).
inline double psi_uniqueness_value(double alpha, double beta, double ell, double g_bar) {
  return (1.0 + alpha * beta - alpha * ell * beta * beta) /
         (2.0 - (1.0 - (1.0 - ell) * alpha) * beta) * g_bar;
}

// psi of the stability criterion, parameterized by the margin r in [0, 1).
inline double psi_stability_value(double alpha, double beta, double ell, double g_bar, double r) {
  return (1.0 + alpha * beta - alpha * ell * beta * beta) /
         (1.0 + r * (1.0 - beta) + (1.0 - ell) * alpha * beta) * g_bar;
}

struct IsotropicConstants {
  double alpha = 0.0;      // sup (H/eta) / ((H/eta) + sigma_s)
  double beta = 0.0;       // sup sigma_s / ((H/gbar) + sigma_s)
  double ell = 0.0;        // domain diameter
  double g_bar = 0.0;
  double eta_inf = 0.0;
  double psi_uniqueness = 0.0;
  double psi_stability = 0.0;   // evaluated at r_required
  double r_required = 0.0;      // smallest margin with psi_stability <= inf density
  bool stability_margin_ok = false;
  bool applicable = false;      // diameter <= 1, the standing hypothesis
  bool verdict = false;         // psi_uniqueness <= inf eta
  double mu_h = 0.0;
  double mu_f = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  double inflow_floor_margin = 0.0;  // min [J_h gbar - (h-mu_h)/(gbar-mu_h) gbar]
};

struct IsotropicCertificate {
  IsotropicConstants constants;
  ScalarField fixed_point_upper;  // limit of the map from gbar
  ScalarField fixed_point_lower;  // limit of the map from eta
  DensityMapResult upper_history;
  DensityMapResult lower_history;
};

// Compute every certifiable constant for a datum with isotropic scattering and
// constant source gbar. The sup/inf constants are taken over grid cells, hence
// are lower bounds of their continuum counterparts; the verdict uses them
// as reported. Domains with diameter > 1 are marked inapplicable rather than
// rescaled.
inline IsotropicCertificate uniqueness_certificate(const InternalDatum& datum,
                                                   const ScalarField& sigma_s, double g_bar,
                                                   const ScalarField& eta, int n_v,
                                                   const LinearSolveConfig& inner,
                                                   double tol = 1e-9, int max_iters = 300) {
  const SpatialGrid& grid = datum.H.grid();
  if (!grid.same_layout(sigma_s.grid()) || !grid.same_layout(eta.grid()))
    throw std::invalid_argument("uniqueness_certificate: grids differ");
  if (!(g_bar > 0.0)) throw std::invalid_argument("uniqueness_certificate: g_bar must be positive");

  IsotropicCertificate cert{IsotropicConstants{}, ScalarField(grid), ScalarField(grid),
                            DensityMapResult{ScalarField(grid), 0, {}, {}, {}},
                            DensityMapResult{ScalarField(grid), 0, {}, {}, {}}};
  IsotropicConstants& k = cert.constants;
  k.ell = grid.diameter();
  k.g_bar = g_bar;
  k.applicable = k.ell <= 1.0;

  k.eta_inf = eta.min();
  for (std::size_t c = 0; c < datum.H.size(); ++c) {
    if (eta[c] > 0.0) {
      const double ratio = datum.H[c] / eta[c];
      k.alpha = std::max(k.alpha, ratio / (ratio + sigma_s[c]));
    }
    const double hg = datum.H[c] / g_bar;
    if (hg + sigma_s[c] > 0.0) k.beta = std::max(k.beta, sigma_s[c] / (hg + sigma_s[c]));
  }
  k.psi_uniqueness = psi_uniqueness_value(k.alpha, k.beta, k.ell, g_bar);
  k.verdict = k.applicable && (k.psi_uniqueness <= k.eta_inf);

  // Fixed points from both extreme starts.
  ScalarField m_upper(grid, g_bar);
  ScalarField m_lower(grid);
  for (std::size_t c = 0; c < m_lower.size(); ++c)
    m_lower[c] = std::max(eta[c], 1e-8 * g_bar);  // the map needs a positive start
  cert.upper_history =
      iterate_density_map(m_upper, datum.H, sigma_s, g_bar, n_v, inner, tol, max_iters);
  cert.lower_history =
      iterate_density_map(m_lower, datum.H, sigma_s, g_bar, n_v, inner, tol, max_iters);
  cert.fixed_point_upper = cert.upper_history.m_star;
  cert.fixed_point_lower = cert.lower_history.m_star;

  const ScalarField& h = cert.fixed_point_upper;
  const ScalarField& f = cert.fixed_point_lower;
  double u_floor = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < h.size(); ++c) {
    const double hi = std::max(h[c], f[c]);
    const double lo = std::min(h[c], f[c]);
    u_floor = std::min(u_floor, lo);
    if (lo > 0.0) k.gamma = std::max(k.gamma, std::abs(h[c] - f[c]) / lo);
    const double ratio_hi = datum.H[c] / hi;
    const double ratio_h = h[c] > 0.0 ? datum.H[c] / h[c] : 0.0;
    if (ratio_hi + sigma_s[c] > 0.0) {
      k.kappa = std::max(k.kappa, ratio_hi / (ratio_hi + sigma_s[c]));
      k.mu_f = std::max(k.mu_f, sigma_s[c] * f[c] / (ratio_hi + sigma_s[c]));
    }
    if (ratio_h + sigma_s[c] > 0.0)
      k.mu_h = std::max(k.mu_h, sigma_s[c] * h[c] / (ratio_h + sigma_s[c]));
  }

  // Smallest stability margin r with psi_stability(r) <= inf density.
  const double numerator = 1.0 + k.alpha * k.beta - k.alpha * k.ell * k.beta * k.beta;
  if (u_floor > 0.0 && k.beta < 1.0) {
    const double needed =
        (numerator * g_bar / u_floor - 1.0 - (1.0 - k.ell) * k.alpha * k.beta) / (1.0 - k.beta);
    k.r_required = std::max(0.0, needed);
    k.stability_margin_ok = k.r_required < 1.0;
    k.psi_stability = psi_stability_value(k.alpha, k.beta, k.ell, g_bar,
                                          std::min(k.r_required, 1.0));
  }

  // Attenuated-inflow floor at the upper fixed point.
  const AngularGrid angles(n_v);
  const ScalarField Jh = apply_J(h, datum.H, sigma_s, g_bar, angles, inner.ray_step);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < Jh.size(); ++c) {
    const double denom = g_bar - k.mu_h;
    const double floor = denom > 0.0 ? (h[c] - k.mu_h) / denom * g_bar : 0.0;
    margin = std::min(margin, Jh[c] - floor);
  }
  k.inflow_floor_margin = margin;
  return cert;
}

}  // namespace tprt

#endif  // TPRT_ISOTROPIC_ORACLE_HPP_
