#ifndef TPRT_DATA_SYNTHESIS_HPP_
#define TPRT_DATA_SYNTHESIS_HPP_
//! \file data_synthesis.hpp
//  \brief Internal photoacoustic data H = sigma_a <u> + sigma_b <u>^2 from a
//         forward solve, with seeded noise and refined-grid synthesis so
//         inversions never reuse the discretization that made their data.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "tprt/fields.hpp"
#include "tprt/forward_semilinear.hpp"
#include "tprt/rng.hpp"

namespace tprt {

struct Provenance {
  std::string source_id;
  int nx = 0, ny = 0, n_v = 0;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  int refinement = 1;
};

struct InternalDatum {
  ScalarField H;
  Provenance provenance;
};

// H(x) = sigma_a(x) <u>(x) + sigma_b(x) <u>^2(x), pointwise on the grid.
inline InternalDatum synthesize(const CoefficientSet& coeffs, const ScalarField& u_avg,
                                Provenance provenance = {}) {
  if (!coeffs.grid().same_layout(u_avg.grid()))
    throw std::invalid_argument("synthesize: density grid mismatch");
  if (u_avg.min() < 0.0)
    throw std::invalid_argument("synthesize: density must be non-negative");
  ScalarField H(u_avg.grid());
  for (std::size_t c = 0; c < H.size(); ++c)
    H[c] = coeffs.sigma_a()[c] * u_avg[c] + coeffs.sigma_b()[c] * u_avg[c] * u_avg[c];
  provenance.nx = u_avg.grid().nx();
  provenance.ny = u_avg.grid().ny();
  return {std::move(H), std::move(provenance)};
}

// Multiplicative uniform noise H' = H (1 + level xi), xi ~ U[-1,1] i.i.d. from
// the seeded stream; keeps the sup-norm perturbation bound exact:
// ||H' - H||_inf <= level ||H||_inf.
inline InternalDatum add_noise(const InternalDatum& datum, double level, std::uint64_t seed) {
  if (!(level >= 0.0)) throw std::invalid_argument("add_noise: level must be >= 0");
  InternalDatum out{ScalarField(datum.H.grid()), datum.provenance};
  Rng rng = make_stream(seed, "noise:" + datum.provenance.source_id);
  for (std::size_t c = 0; c < out.H.size(); ++c)
    out.H[c] = datum.H[c] * (1.0 + level * rng.uniform_pm1());
  out.provenance.noise_level = level;
  out.provenance.seed = seed;
  return out;
}

// Restriction by block averaging: each coarse cell takes the mean of its
// factor x factor fine children. Exact for constants.
inline ScalarField restrict_to(const ScalarField& fine, const SpatialGrid& coarse, int factor) {
  if (factor < 1) throw std::invalid_argument("restrict_to: factor must be >= 1");
  if (fine.grid().nx() != coarse.nx() * factor || fine.grid().ny() != coarse.ny() * factor)
    throw std::invalid_argument("restrict_to: grids not nested by the given factor");
  ScalarField out(coarse);
  const double w = 1.0 / (static_cast<double>(factor) * factor);
  for (int j = 0; j < coarse.ny(); ++j)
    for (int i = 0; i < coarse.nx(); ++i) {
      double s = 0.0;
      for (int jj = 0; jj < factor; ++jj)
        for (int ii = 0; ii < factor; ++ii) s += fine(i * factor + ii, j * factor + jj);
      out(i, j) = s * w;
    }
  return out;
}

// Coefficients must be re-evaluable on arbitrary grids for refined synthesis;
// phantom generators provide exactly this.
using CoefficientProvider = std::function<CoefficientSet(const SpatialGrid&)>;

struct RefinedSynthesisConfig {
  int factor = 2;
  SemilinearConfig solver;
};

// Forward-solve on a grid refined by `factor` in both cell size and ray step,
// then restrict H to the reconstruction grid by cell averaging.
inline InternalDatum synthesize_on_refined(const CoefficientProvider& provider,
                                           const SpatialGrid& recon_grid,
                                           const GeneralSource& g,
                                           const RefinedSynthesisConfig& cfg,
                                           Provenance provenance = {}) {
  if (cfg.factor < 2) throw std::invalid_argument("synthesize_on_refined: factor must be >= 2");
  SpatialGrid fine(recon_grid.Lx(), recon_grid.Ly(), recon_grid.nx() * cfg.factor,
                   recon_grid.ny() * cfg.factor);
  CoefficientSet coeffs = provider(fine);
  SemilinearConfig solver = cfg.solver;
  solver.inner.ray_step = cfg.solver.inner.ray_step / cfg.factor;
  SemilinearResult fwd = solve_semilinear(coeffs, g, solver);
  InternalDatum fine_datum = synthesize(coeffs, fwd.u_avg, provenance);
  InternalDatum out{restrict_to(fine_datum.H, recon_grid, cfg.factor), fine_datum.provenance};
  out.provenance.nx = recon_grid.nx();
  out.provenance.ny = recon_grid.ny();
  out.provenance.refinement = cfg.factor;
  return out;
}

// Same, for a collimated source.
inline InternalDatum synthesize_on_refined(const CoefficientProvider& provider,
                                           const SpatialGrid& recon_grid,
                                           const CollimatedSource& src,
                                           const RefinedSynthesisConfig& cfg,
                                           Provenance provenance = {}) {
  if (cfg.factor < 2) throw std::invalid_argument("synthesize_on_refined: factor must be >= 2");
  SpatialGrid fine(recon_grid.Lx(), recon_grid.Ly(), recon_grid.nx() * cfg.factor,
                   recon_grid.ny() * cfg.factor);
  CoefficientSet coeffs = provider(fine);
  SemilinearConfig solver = cfg.solver;
  solver.inner.ray_step = cfg.solver.inner.ray_step / cfg.factor;
  CollimatedResult fwd = solve_semilinear_collimated(coeffs, src, solver);
  InternalDatum fine_datum = synthesize(coeffs, fwd.u_avg, provenance);
  InternalDatum out{restrict_to(fine_datum.H, recon_grid, cfg.factor), fine_datum.provenance};
  out.provenance.nx = recon_grid.nx();
  out.provenance.ny = recon_grid.ny();
  out.provenance.refinement = cfg.factor;
  return out;
}

// Same, for a boundary point source (free transport only).
inline InternalDatum synthesize_on_refined(const CoefficientProvider& provider,
                                           const SpatialGrid& recon_grid, const PointSource& src,
                                           const RefinedSynthesisConfig& cfg,
                                           Provenance provenance = {}) {
  if (cfg.factor < 2) throw std::invalid_argument("synthesize_on_refined: factor must be >= 2");
  SpatialGrid fine(recon_grid.Lx(), recon_grid.Ly(), recon_grid.nx() * cfg.factor,
                   recon_grid.ny() * cfg.factor);
  CoefficientSet coeffs = provider(fine);
  ScalarField u_avg =
      point_source_density(coeffs, src, cfg.solver.inner.ray_step / cfg.factor);
  InternalDatum fine_datum = synthesize(coeffs, u_avg, provenance);
  InternalDatum out{restrict_to(fine_datum.H, recon_grid, cfg.factor), fine_datum.provenance};
  out.provenance.nx = recon_grid.nx();
  out.provenance.ny = recon_grid.ny();
  out.provenance.refinement = cfg.factor;
  return out;
}

}  // namespace tprt

#endif  // TPRT_DATA_SYNTHESIS_HPP_
