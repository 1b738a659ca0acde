#ifndef TPRT_FORWARD_SEMILINEAR_HPP_
#define TPRT_FORWARD_SEMILINEAR_HPP_
//! \file forward_semilinear.hpp
//  \brief Semilinear transport solver: outer fixed-point iteration on the
//         angular average for general bounded and collimated sources, plus the
//         source-admissibility checks that guarantee a unique solution.
//
//  The two-photon term sigma_b <u> u enters the equation only through the
//  density m = <u>, so the outer loop freezes m, solves the linear problem
//  with effective absorption sigma_a + sigma_b m, and updates m from the new
//  angular average until successive densities agree in sup norm.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tprt/fields.hpp"
#include "tprt/geometry.hpp"
#include "tprt/source.hpp"
#include "tprt/transport_linear.hpp"

namespace tprt {

struct SemilinearConfig {
  double tol_fixed_point = 1e-8;  // sup-norm gap of successive densities
  int max_outer_iters = 200;
  LinearSolveConfig inner;
  bool enforce_admissibility = true;  // false = warn-and-proceed

  void validate() const {
    if (!(tol_fixed_point > 0.0)) throw std::invalid_argument("SemilinearConfig: tol <= 0");
    if (max_outer_iters < 1) throw std::invalid_argument("SemilinearConfig: max_outer_iters < 1");
    inner.validate();
  }
};

// Which sufficient smallness clause admitted the source, if any.
enum class SmallnessClause { none, absorption_ratio, scattering_ratio };

struct AdmissibilityReport {
  bool smallness_ok = false;        // positive inf and sup below the admissible ceiling
  SmallnessClause clause = SmallnessClause::none;
  double ceiling = 0.0;             // admissible sup bound for the source
  double mu = 0.0;                  // sup sigma_s / (sigma_a + sigma_s)
  double kappa = 0.0;               // sup sigma_b / (sigma_a + sigma_s)
  double contraction = 0.0;         // collimated fixed-point contraction constant
  bool collimated_ok = false;       // contraction < 1
};

// Smallness of a bounded source: inf g > 0 and
//   sup g <= inf sigma_a/sigma_b                     (sigma_s == 0)
//   sup g <= max(inf sigma_a/sigma_b,
//                2 theta_min inf sigma_s/sigma_b)    (sigma_s != 0),
// together with the collimated contraction constant
//   (1 + [mu^2 tbar/(1-mu) + mu] + mu tbar/(1-mu)^2) kappa sup(g).
inline AdmissibilityReport check_source_smallness(double g_inf, double g_sup,
                                                  const CoefficientSet& coeffs) {
  AdmissibilityReport rep;
  const ScalarField& sa = coeffs.sigma_a();
  const ScalarField& sb = coeffs.sigma_b();
  const ScalarField& ss = coeffs.sigma_s();

  double inf_a_over_b = std::numeric_limits<double>::infinity();
  double inf_s_over_b = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < sa.size(); ++c) {
    if (sb[c] > 0.0) {
      inf_a_over_b = std::min(inf_a_over_b, sa[c] / sb[c]);
      inf_s_over_b = std::min(inf_s_over_b, ss[c] / sb[c]);
    }
    const double st = sa[c] + ss[c];
    if (st > 0.0) {
      rep.mu = std::max(rep.mu, ss[c] / st);
      rep.kappa = std::max(rep.kappa, sb[c] / st);
    }
  }

  const bool scattering = coeffs.has_scattering();
  rep.ceiling = scattering
                    ? std::max(inf_a_over_b, 2.0 * coeffs.kernel().theta_min() * inf_s_over_b)
                    : inf_a_over_b;
  rep.smallness_ok = (g_inf > 0.0) && (g_sup <= rep.ceiling);
  if (rep.smallness_ok) {
    if (g_sup <= inf_a_over_b) rep.clause = SmallnessClause::absorption_ratio;
    else rep.clause = SmallnessClause::scattering_ratio;
  }

  const double tbar = coeffs.kernel().theta_max();
  const double mu = rep.mu;
  if (mu < 1.0) {
    rep.contraction = (1.0 + (mu * mu * tbar / (1.0 - mu) + mu) +
                       mu * tbar / ((1.0 - mu) * (1.0 - mu))) *
                      rep.kappa * g_sup;
    rep.collimated_ok = rep.contraction < 1.0;
  } else {
    rep.contraction = std::numeric_limits<double>::infinity();
  }
  return rep;
}

inline AdmissibilityReport check_source_smallness(const GeneralSource& g,
                                                  const CoefficientSet& coeffs) {
  return check_source_smallness(g.inf(), g.sup(), coeffs);
}

inline AdmissibilityReport check_source_smallness(const CollimatedSource& src,
                                                  const CoefficientSet& coeffs) {
  // A beam profile has inf 0 off its support; only the sup enters the
  // collimated contraction condition.
  return check_source_smallness(0.0, src.sup(), coeffs);
}

struct SemilinearResult {
  PhaseField u;
  ScalarField u_avg;
  int outer_iterations = 0;
  std::vector<double> gap_history;     // sup-norm gaps of successive densities
  double posteriori_residual = 0.0;    // density change of one extra linear solve
  AdmissibilityReport admissibility;
};

// Fixed-point solve of the semilinear problem for a general bounded source.
// Optional m0 selects the starting density (default zero; used by uniqueness
// probes that start from both ends of [0, sup g]).
inline SemilinearResult solve_semilinear(const CoefficientSet& coeffs, const GeneralSource& g,
                                         const SemilinearConfig& cfg,
                                         const std::optional<ScalarField>& m0 = std::nullopt) {
  cfg.validate();
  const SpatialGrid& grid = coeffs.grid();
  const AngularGrid angles(coeffs.kernel().size());

  SemilinearResult res{PhaseField(grid, angles), ScalarField(grid), 0, {}, 0.0,
                       check_source_smallness(g, coeffs)};
  if (!res.admissibility.smallness_ok && cfg.enforce_admissibility)
    throw std::invalid_argument(
        "solve_semilinear: source violates the smallness condition "
        "(use warn-and-proceed to override)");

  ScalarField m = m0.value_or(ScalarField(grid, 0.0));
  if (!m.grid().same_layout(grid))
    throw std::invalid_argument("solve_semilinear: starting density grid mismatch");

  const PhaseField* warm = nullptr;
  PhaseField u_prev(grid, angles);
  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    ScalarField sigma_eff(grid);
    for (std::size_t c = 0; c < sigma_eff.size(); ++c)
      sigma_eff[c] = coeffs.sigma_a()[c] + coeffs.sigma_b()[c] * m[c];

    LinearSolveResult lin = solve_linear(sigma_eff, coeffs, g, angles, cfg.inner, warm);
    ScalarField m_next = angular_average(lin.u);
    const double gap = sup_diff(m_next, m);
    res.gap_history.push_back(gap);
    res.outer_iterations = it;
    u_prev = std::move(lin.u);
    warm = &u_prev;
    m = std::move(m_next);
    if (gap < cfg.tol_fixed_point) {
      res.u = std::move(u_prev);
      res.u_avg = std::move(m);
      // A-posteriori check: one more linear solve with the converged density
      // must reproduce it (residual of the fixed-point equation).
      ScalarField sigma_check(grid);
      for (std::size_t c = 0; c < sigma_check.size(); ++c)
        sigma_check[c] = coeffs.sigma_a()[c] + coeffs.sigma_b()[c] * res.u_avg[c];
      LinearSolveResult check = solve_linear(sigma_check, coeffs, g, angles, cfg.inner, &res.u);
      res.posteriori_residual = sup_diff(angular_average(check.u), res.u_avg);
      return res;
    }
  }
  throw ConvergenceError("solve_semilinear: outer fixed point did not converge",
                         res.gap_history.back(), res.gap_history);
}

// Unscattered beam coefficient plus regular scattered remainder. The beam's
// angular delta is kept symbolic: `ballistic` stores the coefficient of
// d(v - beam), whose angular average under the normalized measure is the
// coefficient itself, so the solution density is ballistic + <scattered>.
struct CollimatedSolution {
  ScalarField ballistic;
  PhaseField scattered;

  ScalarField density() const {
    ScalarField m = angular_average(scattered);
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += ballistic[c];
    return m;
  }
};

struct CollimatedResult {
  CollimatedSolution sol;
  ScalarField u_avg;
  int outer_iterations = 0;
  std::vector<double> gap_history;
  double scatter_bound = 0.0;      // mu gbar theta_max / (1 - mu)
  bool scatter_bound_ok = true;    // sup |scattered| within the bound (+ slack)
  AdmissibilityReport admissibility;
};

namespace detail {

// Beam attenuation: ballistic(x) = profile(entry) exp(-int sigma_t) along the
// fixed beam direction.
inline ScalarField beam_attenuation(const SpatialGrid& grid, const ScalarField& sigma_t,
                                    const CollimatedSource& src, double ray_step) {
  const BilinearSampler smp(grid);
  ScalarField out(grid);
  parallel_for(static_cast<std::size_t>(grid.ny()), [&](std::size_t j) {
    for (int i = 0; i < grid.nx(); ++i) {
      const Vec2 x = grid.center(i, static_cast<int>(j));
      const BoundaryHit hit = trace_to_boundary(grid, x, src.beam());
      const RayResult r =
          integrate_ray(smp, sigma_t.data(), nullptr, x, src.beam(), hit.tau, ray_step);
      out(i, static_cast<int>(j)) = src.profile(hit.point) * r.attenuation;
    }
  });
  return out;
}

}  // namespace detail

// Semilinear solve for a collimated source. Outer fixed point on the density
// m = ballistic + <scattered>; per iteration the ballistic coefficient is the
// attenuated beam with extinction sigma_a + sigma_s + sigma_b m, and the
// scattered part solves the linear problem with zero inflow and internal
// source sigma_s Theta(v, beam) ballistic.
inline CollimatedResult solve_semilinear_collimated(const CoefficientSet& coeffs,
                                                    const CollimatedSource& src,
                                                    const SemilinearConfig& cfg) {
  cfg.validate();
  const SpatialGrid& grid = coeffs.grid();
  const AngularGrid angles(coeffs.kernel().size());
  const int n_v = angles.size();

  CollimatedResult res{CollimatedSolution{ScalarField(grid), PhaseField(grid, angles)},
                       ScalarField(grid), 0, {}, 0.0, true,
                       check_source_smallness(src, coeffs)};
  if (!res.admissibility.collimated_ok && cfg.enforce_admissibility)
    throw std::invalid_argument(
        "solve_semilinear_collimated: contraction condition fails "
        "(use warn-and-proceed to override)");

  const bool scattering = coeffs.has_scattering();
  const GeneralSource zero_inflow = GeneralSource::constant(0.0);

  ScalarField m(grid, 0.0);
  PhaseField scattered(grid, angles);
  const PhaseField* warm = nullptr;
  ScalarField ballistic(grid);

  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    ScalarField sigma_t(grid);
    ScalarField sigma_eff(grid);
    for (std::size_t c = 0; c < sigma_t.size(); ++c) {
      sigma_eff[c] = coeffs.sigma_a()[c] + coeffs.sigma_b()[c] * m[c];
      sigma_t[c] = sigma_eff[c] + coeffs.sigma_s()[c];
    }
    ballistic = detail::beam_attenuation(grid, sigma_t, src, cfg.inner.ray_step);

    if (scattering) {
      PhaseField f(grid, angles);
      for (int k = 0; k < n_v; ++k) {
        const double theta_kb = coeffs.kernel().eval_beam(k, src.beam());
        double* dst = f.slice(k);
        for (std::size_t c = 0; c < ballistic.size(); ++c)
          dst[c] = coeffs.sigma_s()[c] * theta_kb * ballistic[c];
      }
      LinearSolveResult lin = solve_linear_internal_source(
          sigma_eff, coeffs.sigma_s(), coeffs.kernel(), zero_inflow, &f, angles, cfg.inner, warm);
      scattered = std::move(lin.u);
      warm = &scattered;
    }

    ScalarField m_next = angular_average(scattered);
    for (std::size_t c = 0; c < m_next.size(); ++c) m_next[c] += ballistic[c];
    const double gap = sup_diff(m_next, m);
    res.gap_history.push_back(gap);
    res.outer_iterations = it;
    m = std::move(m_next);
    if (gap < cfg.tol_fixed_point || (!scattering && !coeffs.has_two_photon())) {
      res.sol.ballistic = std::move(ballistic);
      res.sol.scattered = std::move(scattered);
      res.u_avg = std::move(m);
      const double mu = res.admissibility.mu;
      if (mu < 1.0) {
        res.scatter_bound = mu * src.sup() * coeffs.kernel().theta_max() / (1.0 - mu);
        double sup_s = 0.0;
        for (std::size_t c = 0; c < res.sol.scattered.size(); ++c)
          sup_s = std::max(sup_s, std::abs(res.sol.scattered[c]));
        res.scatter_bound_ok = sup_s <= res.scatter_bound + 1e-9;
      }
      return res;
    }
  }
  throw ConvergenceError("solve_semilinear_collimated: outer fixed point did not converge",
                         res.gap_history.back(), res.gap_history);
}

// Density of the free-transport solution for a boundary point source with
// constant angular strength (requires sigma_s == 0). Along the ray through x
// the weighted density chi(s) = s <u>(site + s v) satisfies
//   chi' = -(sigma_a + sigma_b chi/s) chi,  chi(0) = strength |n(site).v|,
// which is marched per cell with RK4. The two-photon coefficient must vanish
// within src.clear_radius of the site so the geometric 1/s spreading never
// multiplies sigma_b.
inline ScalarField point_source_density(const CoefficientSet& coeffs, const PointSource& src,
                                        double ray_step) {
  const SpatialGrid& grid = coeffs.grid();
  if (coeffs.has_scattering())
    throw std::invalid_argument("point_source_density: requires sigma_s == 0");
  if (!grid.on_boundary(src.site, 1e-9))
    throw std::invalid_argument("point_source_density: site must lie on the boundary");
  if (!(src.strength > 0.0))
    throw std::invalid_argument("point_source_density: strength must be positive");
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      const Vec2 x = grid.center(i, j);
      if ((x - src.site).norm() < src.clear_radius && coeffs.sigma_b()(i, j) != 0.0)
        throw std::invalid_argument(
            "point_source_density: sigma_b must vanish within clear_radius of the site");
    }

  const Vec2 n_out = grid.outward_normal(src.site);
  const BilinearSampler smp(grid);
  const double* sa = coeffs.sigma_a().data();
  const double* sb = coeffs.sigma_b().data();

  ScalarField out(grid);
  parallel_for(static_cast<std::size_t>(grid.ny()), [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    for (int i = 0; i < grid.nx(); ++i) {
      const Vec2 x = grid.center(i, j);
      const Vec2 d = x - src.site;
      const double t = d.norm();
      const Vec2 v{d.x / t, d.y / t};
      const double chi0 = src.strength * std::abs(n_out.dot(v));
      const int n = ray_segments(t, ray_step);
      const double ds = t / n;
      auto slope = [&](double s, double chi) {
        const auto st = smp.stencil({src.site.x + s * v.x, src.site.y + s * v.y});
        const double a = BilinearSampler::apply(sa, st);
        const double b = BilinearSampler::apply(sb, st);
        const double tp = (b == 0.0 || s <= 0.0) ? 0.0 : b * chi / s;
        return -(a + tp) * chi;
      };
      double chi = chi0;
      for (int step = 0; step < n; ++step) {
        const double s0 = step * ds;
        const double k1 = slope(s0, chi);
        const double k2 = slope(s0 + 0.5 * ds, chi + 0.5 * ds * k1);
        const double k3 = slope(s0 + 0.5 * ds, chi + 0.5 * ds * k2);
        const double k4 = slope(s0 + ds, chi + ds * k3);
        chi += ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      out(i, j) = chi / t;
    }
  });
  return out;
}

}  // namespace tprt

#endif  // TPRT_FORWARD_SEMILINEAR_HPP_
