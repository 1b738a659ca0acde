#ifndef TPRT_RECON_SCATTER_HPP_
#define TPRT_RECON_SCATTER_HPP_
//! \file recon_scatter.hpp
//  \brief Coefficient reconstruction with known scattering: recover the density
//         by the clamped fixed-point iteration on the datum-defined absorption
//         H / max(<u>, eta), then the pair (sigma_a, sigma_b) from two data.
//
//  A solution with datum H satisfies the nonlinear problem obtained by writing
//  the total absorption as H/<u>. With a-priori bounds the density is known to
//  live between the angular averages of two extremal linear solves:
//  u_max^H (absorption H/gbar) above, u_min (absorption sabar + sbbar gbar)
//  below, and above eta = H/(sabar + sbbar gbar). Iterating linear solves with
//  absorption H/max(<u_k>, eta) walks monotonically through that bracket.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tprt/data_synthesis.hpp"
#include "tprt/fields.hpp"
#include "tprt/recon_free.hpp"
#include "tprt/source.hpp"
#include "tprt/transport_linear.hpp"

namespace tprt {

struct ScatterReconConfig {
  double sigma_a_hi = 0.0;  // a-priori coefficient ceilings entering eta and u_min
  double sigma_b_hi = 0.0;
  double sigma_a_lo = 0.0;  // floors, used only for reporting/validation
  double sigma_b_lo = 0.0;
  double g_bar = 0.0;       // sup of the generating source
  double tol_fp = 1e-8;
  int max_iters = 200;
  LinearSolveConfig inner;
  bool alpha_report = false;

  void validate() const {
    if (!(sigma_a_hi > 0.0) || !(g_bar > 0.0))
      throw std::invalid_argument("ScatterReconConfig: need positive sigma_a_hi and g_bar");
    if (sigma_b_hi < 0.0 || sigma_a_lo < 0.0 || sigma_b_lo < 0.0)
      throw std::invalid_argument("ScatterReconConfig: negative bounds");
    if (sigma_a_lo > sigma_a_hi || sigma_b_lo > sigma_b_hi)
      throw std::invalid_argument("ScatterReconConfig: bounds out of order");
    if (!(tol_fp > 0.0) || max_iters < 1)
      throw std::invalid_argument("ScatterReconConfig: bad iteration controls");
    inner.validate();
  }

  double absorption_ceiling() const { return sigma_a_hi + sigma_b_hi * g_bar; }
};

// eta(x) = H(x) / (sigma_a_hi + sigma_b_hi g_bar): a floor for the density of
// any solution consistent with the datum and the declared bounds.
inline ScalarField compute_eta(const InternalDatum& datum, const ScatterReconConfig& cfg) {
  cfg.validate();
  const double denom = cfg.absorption_ceiling();
  ScalarField eta(datum.H.grid());
  for (std::size_t c = 0; c < eta.size(); ++c) eta[c] = datum.H[c] / denom;
  return eta;
}

struct Bracket {
  ScalarField u_min_avg;  // density of the linear solve with the absorption ceiling
  ScalarField u_max_avg;  // density of the linear solve with absorption H/gbar
  ScalarField eta;
  bool eta_below_u_min = false;  // the assumption the clamp analysis rests on
  double worst_eta_excess = 0.0;
  bool degenerate_datum = false;  // H == 0 somewhere: absorption floored there
};

inline constexpr double kAbsorptionFloor = 1e-12;

namespace detail {

inline ScalarField datum_absorption(const ScalarField& H, const ScalarField& density_floor) {
  ScalarField out(H.grid());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double m = density_floor[c];
    out[c] = m > 0.0 ? H[c] / m : 0.0;
    if (out[c] < kAbsorptionFloor) out[c] = kAbsorptionFloor;
  }
  return out;
}

}  // namespace detail

// The two extremal linear solves bounding every admissible density.
inline Bracket compute_bracket(const InternalDatum& datum, const GeneralSource& g,
                               const ScalarField& sigma_s, const ScatteringKernel& kernel,
                               const ScatterReconConfig& cfg) {
  cfg.validate();
  if (datum.H.min() < 0.0)
    throw std::invalid_argument("compute_bracket: datum must be non-negative");
  const SpatialGrid& grid = datum.H.grid();
  const AngularGrid angles(kernel.size());

  ScalarField sigma_max_h(grid);
  bool degenerate = false;
  for (std::size_t c = 0; c < sigma_max_h.size(); ++c) {
    sigma_max_h[c] = datum.H[c] / cfg.g_bar;
    if (!(sigma_max_h[c] > kAbsorptionFloor)) {
      sigma_max_h[c] = kAbsorptionFloor;
      degenerate = true;
    }
  }
  ScalarField sigma_min(grid, cfg.absorption_ceiling());

  Bracket out{ScalarField(grid), ScalarField(grid), compute_eta(datum, cfg), false, 0.0, degenerate};
  out.u_max_avg = angular_average(solve_linear(sigma_max_h, sigma_s, kernel, g, angles, cfg.inner).u);
  out.u_min_avg = angular_average(solve_linear(sigma_min, sigma_s, kernel, g, angles, cfg.inner).u);

  out.worst_eta_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < out.eta.size(); ++c)
    out.worst_eta_excess = std::max(out.worst_eta_excess, out.eta[c] - out.u_min_avg[c]);
  out.eta_below_u_min = out.worst_eta_excess <= 0.0;
  return out;
}

enum class FixedPointStart { from_u_max, from_u_min, custom };

struct RecoveryResult {
  PhaseField u;
  ScalarField u_avg;
  ScalarField Sigma_a;               // H / <u>, clipped into [H/gbar, ceiling]
  int iterations = 0;
  std::vector<double> gap_history;   // sup |<u_k> - <u_{k-1}>|
  std::vector<double> max_increase;  // sup (<u_k> - <u_{k-1}>)_+ per iteration
  std::vector<double> max_decrease;  // sup (<u_{k-1}> - <u_k>)_+ per iteration
  std::vector<int> clamp_active;     // cells with eta > <u_{k-1}> per iteration
  std::size_t clipped_cells = 0;     // Sigma_a outside the a-priori range
  Bracket bracket;
};

// Fixed-point recovery of the transport solution from one internal datum.
// Each step solves the linear problem with absorption H/max(<u_{k-1}>, eta).
// Started from u_max^H the density decreases pointwise; started from u_min it
// increases; both limits agree when the datum admits a unique solution.
inline RecoveryResult fixed_point_recover_u(const InternalDatum& datum, const GeneralSource& g,
                                            const ScalarField& sigma_s,
                                            const ScatteringKernel& kernel,
                                            const ScatterReconConfig& cfg,
                                            FixedPointStart start = FixedPointStart::from_u_max,
                                            const PhaseField* custom_start = nullptr) {
  cfg.validate();
  if (datum.H.min() < 0.0)
    throw std::invalid_argument("fixed_point_recover_u: datum must be non-negative");
  const SpatialGrid& grid = datum.H.grid();
  const AngularGrid angles(kernel.size());

  RecoveryResult res{PhaseField(grid, angles), ScalarField(grid), ScalarField(grid),
                     0, {}, {}, {}, {}, 0,
                     compute_bracket(datum, g, sigma_s, kernel, cfg)};

  PhaseField u(grid, angles);
  switch (start) {
    case FixedPointStart::from_u_max: {
      ScalarField sig(grid);
      for (std::size_t c = 0; c < sig.size(); ++c)
        sig[c] = std::max(datum.H[c] / cfg.g_bar, kAbsorptionFloor);
      u = solve_linear(sig, sigma_s, kernel, g, angles, cfg.inner).u;
      break;
    }
    case FixedPointStart::from_u_min: {
      ScalarField sig(grid, cfg.absorption_ceiling());
      u = solve_linear(sig, sigma_s, kernel, g, angles, cfg.inner).u;
      break;
    }
    case FixedPointStart::custom:
      if (!custom_start) throw std::invalid_argument("fixed_point_recover_u: missing custom start");
      u = *custom_start;
      break;
  }

  ScalarField m = angular_average(u);
  int consecutive_growth = 0;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    int active = 0;
    ScalarField clamped(grid);
    for (std::size_t c = 0; c < m.size(); ++c) {
      if (res.bracket.eta[c] > m[c]) {
        clamped[c] = res.bracket.eta[c];
        ++active;
      } else {
        clamped[c] = m[c];
      }
    }
    res.clamp_active.push_back(active);

    ScalarField sigma = detail::datum_absorption(datum.H, clamped);
    LinearSolveResult lin = solve_linear(sigma, sigma_s, kernel, g, angles, cfg.inner, &u);
    ScalarField m_next = angular_average(lin.u);

    double gap = 0.0, inc = 0.0, dec = 0.0;
    for (std::size_t c = 0; c < m.size(); ++c) {
      const double d = m_next[c] - m[c];
      gap = std::max(gap, std::abs(d));
      inc = std::max(inc, d);
      dec = std::max(dec, -d);
    }
    res.gap_history.push_back(gap);
    res.max_increase.push_back(std::max(inc, 0.0));
    res.max_decrease.push_back(std::max(dec, 0.0));
    res.iterations = it;

    u = std::move(lin.u);
    m = std::move(m_next);

    if (res.gap_history.size() >= 2 &&
        gap > res.gap_history[res.gap_history.size() - 2] * (1.0 + 1e-12)) {
      if (++consecutive_growth >= 5)
        throw ConvergenceError("fixed_point_recover_u: diverging (5 consecutive gap increases)",
                               gap, res.gap_history);
    } else {
      consecutive_growth = 0;
    }

    if (gap < cfg.tol_fp) {
      res.u = std::move(u);
      res.u_avg = std::move(m);
      const double ceiling = cfg.absorption_ceiling();
      for (std::size_t c = 0; c < res.u_avg.size(); ++c) {
        const double dens = std::max(res.u_avg[c], kAbsorptionFloor);
        double sig_rec = datum.H[c] / dens;
        const double lo = datum.H[c] / cfg.g_bar;
        if (sig_rec < lo - 1e-12 || sig_rec > ceiling + 1e-12) {
          ++res.clipped_cells;
          sig_rec = std::min(std::max(sig_rec, lo), ceiling);
        }
        res.Sigma_a[c] = std::max(sig_rec, kAbsorptionFloor);
      }
      return res;
    }
  }
  throw ConvergenceError("fixed_point_recover_u: max_iters exceeded",
                         res.gap_history.back(), res.gap_history);
}

struct ScatterPairResult {
  ReconPair pair;
  RecoveryResult rec1;
  RecoveryResult rec2;
};

// Per-cell solve of [1 m1; 1 m2] (sigma_a, sigma_b)^T = (Sa1, Sa2)^T.
inline std::pair<double, double> solve_absorption_pair(double Sa1, double Sa2, double m1,
                                                       double m2) {
  const double sigma_b = (Sa1 - Sa2) / (m1 - m2);
  return {Sa1 - sigma_b * m1, sigma_b};
}

// Two-datum recovery of (sigma_a, sigma_b): per cell solve
//   [1 <u_1>; 1 <u_2>] (sigma_a, sigma_b)^T = (Sigma_a^1, Sigma_a^2)^T,
// declining cells where the densities fail to separate.
inline ScatterPairResult recover_pair_scatter(const InternalDatum& H1, const InternalDatum& H2,
                                              const GeneralSource& g1, const GeneralSource& g2,
                                              const ScalarField& sigma_s,
                                              const ScatteringKernel& kernel,
                                              const ScatterReconConfig& cfg, double det_floor) {
  ScatterReconConfig cfg1 = cfg;
  cfg1.g_bar = g1.sup();
  ScatterReconConfig cfg2 = cfg;
  cfg2.g_bar = g2.sup();
  ScatterPairResult out{ReconPair{ScalarField(H1.H.grid()), ScalarField(H1.H.grid()),
                                  ScalarField(H1.H.grid()),
                                  std::vector<std::uint8_t>(H1.H.grid().cell_count(), 0), 0},
                        fixed_point_recover_u(H1, g1, sigma_s, kernel, cfg1),
                        fixed_point_recover_u(H2, g2, sigma_s, kernel, cfg2)};

  const std::size_t n = H1.H.grid().cell_count();
  for (std::size_t c = 0; c < n; ++c) {
    const double m1 = out.rec1.u_avg[c];
    const double m2 = out.rec2.u_avg[c];
    out.pair.conditioning[c] = std::abs(m1 - m2);
    if (out.pair.conditioning[c] < det_floor) {
      out.pair.mask[c] = 1;
      ++out.pair.masked_cells;
      continue;
    }
    const auto [sa, sb] = solve_absorption_pair(out.rec1.Sigma_a[c], out.rec2.Sigma_a[c], m1, m2);
    out.pair.sigma_a_rec[c] = sa;
    out.pair.sigma_b_rec[c] = sb;
  }
  if (out.pair.masked_cells == n)
    throw DataInconsistencyError("recover_pair_scatter: every cell was masked");
  return out;
}

struct PiAlphaReport {
  double alpha_estimate = 0.0;  // inf over cells and ordinates
  bool member = false;          // alpha_estimate > 0
  double beta_estimate = 0.0;   // ceiling of Sigma_a times sup |g H / Sigma_a| on inflow
  bool beta_ok = false;         // beta_estimate < 1
  std::size_t excluded_cells = 0;
};

namespace detail {

// Central differences inside, one-sided at the boundary ring.
inline void gradient(const ScalarField& f, ScalarField& gx, ScalarField& gy) {
  const SpatialGrid& grid = f.grid();
  const double idx = 1.0 / grid.dx();
  const double idy = 1.0 / grid.dy();
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      if (i == 0) gx(i, j) = (f(1, j) - f(0, j)) * idx;
      else if (i == grid.nx() - 1) gx(i, j) = (f(i, j) - f(i - 1, j)) * idx;
      else gx(i, j) = 0.5 * (f(i + 1, j) - f(i - 1, j)) * idx;
      if (j == 0) gy(i, j) = (f(i, 1) - f(i, 0)) * idy;
      else if (j == grid.ny() - 1) gy(i, j) = (f(i, j) - f(i, j - 1)) * idy;
      else gy(i, j) = 0.5 * (f(i, j + 1) - f(i, j - 1)) * idy;
    }
}

}  // namespace detail

// Estimate of the stability-class margin
//   alpha = inf_{x,v} [ Sigma_a - v.grad(Sigma_a)/Sigma_a + v.grad(H)/H ]
// over grid cells and ordinates, and of the boundary smallness
//   beta = sup(Sigma_a) sup_{inflow} |g H / Sigma_a|.
// Advisory: gradients are finite differences, so this is a consistent estimate
// of the continuum quantity, not a certified bound.
inline PiAlphaReport check_pi_alpha(const ScalarField& Sigma_a, const InternalDatum& datum,
                                    const GeneralSource& g, const AngularGrid& angles) {
  const SpatialGrid& grid = Sigma_a.grid();
  if (!grid.same_layout(datum.H.grid()))
    throw std::invalid_argument("check_pi_alpha: grids differ");

  ScalarField dax(grid), day(grid), dhx(grid), dhy(grid);
  detail::gradient(Sigma_a, dax, day);
  detail::gradient(datum.H, dhx, dhy);

  PiAlphaReport rep;
  rep.alpha_estimate = std::numeric_limits<double>::infinity();
  double sigma_max = 0.0;
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      const std::size_t c = grid.index(i, j);
      sigma_max = std::max(sigma_max, Sigma_a[c]);
      if (!(Sigma_a[c] > 0.0) || !(datum.H[c] > 0.0)) {
        ++rep.excluded_cells;
        continue;
      }
      for (int k = 0; k < angles.size(); ++k) {
        const Vec2 v = angles.direction(k);
        const double val = Sigma_a[c] - (v.x * dax[c] + v.y * day[c]) / Sigma_a[c] +
                           (v.x * dhx[c] + v.y * dhy[c]) / datum.H[c];
        rep.alpha_estimate = std::min(rep.alpha_estimate, val);
      }
    }
  rep.member = rep.alpha_estimate > 0.0 && std::isfinite(rep.alpha_estimate);

  double boundary_sup = 0.0;
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      const bool edge = (i == 0 || i == grid.nx() - 1 || j == 0 || j == grid.ny() - 1);
      if (!edge) continue;
      const std::size_t c = grid.index(i, j);
      if (!(Sigma_a[c] > 0.0)) continue;
      Vec2 xb = grid.center(i, j);
      // project the center onto the nearest face
      const double dl = xb.x, dr = grid.Lx() - xb.x, db = xb.y, dt = grid.Ly() - xb.y;
      const double dmin = std::min(std::min(dl, dr), std::min(db, dt));
      Vec2 nu;
      if (dmin == dl) { xb.x = 0.0; nu = {-1.0, 0.0}; }
      else if (dmin == dr) { xb.x = grid.Lx(); nu = {1.0, 0.0}; }
      else if (dmin == db) { xb.y = 0.0; nu = {0.0, -1.0}; }
      else { xb.y = grid.Ly(); nu = {0.0, 1.0}; }
      for (int k = 0; k < angles.size(); ++k) {
        const Vec2 v = angles.direction(k);
        if (!(-nu.dot(v) > 0.0)) continue;
        boundary_sup = std::max(boundary_sup, std::abs(g(xb, v)) * datum.H[c] / Sigma_a[c]);
      }
    }
  rep.beta_estimate = sigma_max * boundary_sup;
  rep.beta_ok = rep.beta_estimate < 1.0;
  return rep;
}

struct StabilityRow {
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  double data_delta_l2 = 0.0;  // L2 size of the injected data perturbation
  double coeff_err_l2 = 0.0;   // L2 error of the recovered pair vs truth
  bool ok = true;
  std::string note;
};

struct StabilityTable {
  double baseline_err_l2 = 0.0;  // noise-free reconstruction error (discretization floor)
  std::vector<StabilityRow> rows;
};

namespace detail {

inline double pair_error_l2(const ReconPair& pair, const CoefficientSet& truth) {
  double s = 0.0;
  for (std::size_t c = 0; c < pair.sigma_a_rec.size(); ++c) {
    if (pair.masked(c)) continue;
    const double da = pair.sigma_a_rec[c] - truth.sigma_a()[c];
    const double db = pair.sigma_b_rec[c] - truth.sigma_b()[c];
    s += (da * da + db * db);
  }
  return std::sqrt(s * truth.grid().cell_area());
}

}  // namespace detail

// Empirical two-sided stability probe: perturb the synthesized data pair at
// each noise level/seed, reconstruct, and tabulate (||dH||, ||d(sigma)||).
// Reconstruction failures are recorded per row, never fatal.
inline StabilityTable stability_probe(const CoefficientProvider& provider,
                                      const SpatialGrid& recon_grid, const GeneralSource& g1,
                                      const GeneralSource& g2,
                                      const RefinedSynthesisConfig& synth_cfg,
                                      const ScatterReconConfig& recon_cfg, double det_floor,
                                      const std::vector<double>& noise_levels,
                                      const std::vector<std::uint64_t>& seeds) {
  CoefficientSet truth = provider(recon_grid);
  InternalDatum H1 = synthesize_on_refined(provider, recon_grid, g1, synth_cfg, {"g1"});
  InternalDatum H2 = synthesize_on_refined(provider, recon_grid, g2, synth_cfg, {"g2"});

  StabilityTable table;
  {
    ScatterPairResult base = recover_pair_scatter(H1, H2, g1, g2, truth.sigma_s(),
                                                  truth.kernel(), recon_cfg, det_floor);
    table.baseline_err_l2 = detail::pair_error_l2(base.pair, truth);
  }
  for (const double level : noise_levels)
    for (const std::uint64_t seed : seeds) {
      StabilityRow row{level, seed, 0.0, 0.0, true, ""};
      InternalDatum N1 = add_noise(H1, level, seed);
      InternalDatum N2 = add_noise(H2, level, seed);
      double s = 0.0;
      for (std::size_t c = 0; c < H1.H.size(); ++c) {
        const double d1 = N1.H[c] - H1.H[c];
        const double d2 = N2.H[c] - H2.H[c];
        s += d1 * d1 + d2 * d2;
      }
      row.data_delta_l2 = std::sqrt(s * recon_grid.cell_area());
      try {
        ScatterPairResult rec = recover_pair_scatter(N1, N2, g1, g2, truth.sigma_s(),
                                                     truth.kernel(), recon_cfg, det_floor);
        row.coeff_err_l2 = detail::pair_error_l2(rec.pair, truth);
      } catch (const std::exception& e) {
        row.ok = false;
        row.note = e.what();
      }
      table.rows.push_back(std::move(row));
    }
  return table;
}

}  // namespace tprt

#endif  // TPRT_RECON_SCATTER_HPP_
