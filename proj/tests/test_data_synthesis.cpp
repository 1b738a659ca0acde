#include <gtest/gtest.h>

#include <cmath>

#include "tprt/data_synthesis.hpp"
#include "tprt/phantom.hpp"

using namespace tprt;

namespace {

CoefficientProvider constant_provider(double sa, double sb, double ss, int n_v) {
  return [=](const SpatialGrid& grid) {
    PhantomSpec spec;
    spec.sigma_a_bg = sa;
    spec.sigma_b_bg = sb;
    spec.sigma_s_bg = ss;
    return make_phantom(spec, grid, ScatteringKernel::isotropic(n_v));
  };
}

}  // namespace

TEST(Synthesize, PointwiseArithmetic) {
  SpatialGrid grid(1.0, 1.0, 4, 4);
  const CoefficientSet coeffs = constant_provider(1.0, 0.5, 0.0, 4)(grid);
  ScalarField u(grid, 0.2);
  const InternalDatum datum = synthesize(coeffs, u, {"h"});
  for (std::size_t c = 0; c < datum.H.size(); ++c) EXPECT_DOUBLE_EQ(datum.H[c], 0.22);
}

TEST(Synthesize, LinearDatumWhenNoTwoPhoton) {
  SpatialGrid grid(1.0, 1.0, 4, 4);
  const CoefficientSet coeffs = constant_provider(1.3, 0.0, 0.0, 4)(grid);
  ScalarField u(grid, 0.4);
  const InternalDatum datum = synthesize(coeffs, u, {});
  for (std::size_t c = 0; c < datum.H.size(); ++c) EXPECT_DOUBLE_EQ(datum.H[c], 1.3 * 0.4);
  ScalarField zero(grid, 0.0);
  const InternalDatum none = synthesize(coeffs, zero, {});
  for (std::size_t c = 0; c < none.H.size(); ++c) EXPECT_DOUBLE_EQ(none.H[c], 0.0);
}

TEST(AddNoise, ZeroLevelAndDeterminism) {
  SpatialGrid grid(1.0, 1.0, 8, 8);
  ScalarField H(grid);
  Rng rng(4);
  for (std::size_t c = 0; c < H.size(); ++c) H[c] = rng.uniform(0.5, 1.5);
  const InternalDatum datum{H, {"H1"}};
  const InternalDatum same = add_noise(datum, 0.0, 123);
  EXPECT_DOUBLE_EQ(sup_diff(same.H, H), 0.0);

  const InternalDatum a = add_noise(datum, 0.02, 99);
  const InternalDatum b = add_noise(datum, 0.02, 99);
  EXPECT_DOUBLE_EQ(sup_diff(a.H, b.H), 0.0);
  const InternalDatum c = add_noise(datum, 0.02, 100);
  EXPECT_GT(sup_diff(a.H, c.H), 0.0);
}

TEST(AddNoise, SupBoundIsExact) {
  SpatialGrid grid(1.0, 1.0, 16, 16);
  ScalarField H(grid, 2.0);
  const InternalDatum datum{H, {"H1"}};
  const double level = 0.01;
  const InternalDatum noisy = add_noise(datum, level, 7);
  double rel = 0.0;
  for (std::size_t c = 0; c < H.size(); ++c)
    rel = std::max(rel, std::abs(noisy.H[c] - H[c]) / H[c]);
  EXPECT_LE(rel, level);
  EXPECT_GT(rel, 0.25 * level);  // some samples actually move
}

TEST(Restriction, ConstantsAndAverages) {
  SpatialGrid coarse(1.0, 1.0, 4, 4);
  SpatialGrid fine(1.0, 1.0, 8, 8);
  ScalarField f(fine, 3.5);
  const ScalarField r = restrict_to(f, coarse, 2);
  for (std::size_t c = 0; c < r.size(); ++c) EXPECT_DOUBLE_EQ(r[c], 3.5);

  ScalarField linear = ScalarField::from_function(fine, [](Vec2 p) { return p.x; });
  const ScalarField rl = restrict_to(linear, coarse, 2);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(rl(i, j), coarse.center(i, j).x, 1e-14);

  EXPECT_THROW(restrict_to(f, SpatialGrid(1.0, 1.0, 3, 3), 2), std::invalid_argument);
}

TEST(RefinedSynthesis, MatchesSameGridSynthesisOnConstantMedium) {
  SpatialGrid grid(1.0, 1.0, 24, 24);
  const CoefficientProvider provider = constant_provider(1.0, 0.4, 0.6, 8);
  GeneralSource g = GeneralSource::constant(0.9);
  RefinedSynthesisConfig cfg;
  cfg.factor = 2;
  cfg.solver.inner.ray_step = 1.0 / 48;
  cfg.solver.inner.tol_source = 1e-11;
  const InternalDatum refined = synthesize_on_refined(provider, grid, g, cfg, {"H"});

  const CoefficientSet coeffs = provider(grid);
  SemilinearConfig scfg = cfg.solver;
  const SemilinearResult direct = solve_semilinear(coeffs, g, scfg);
  const InternalDatum same = synthesize(coeffs, direct.u_avg, {"H"});
  // agreement within the coarse-grid discretization error
  EXPECT_LT(sup_diff(refined.H, same.H), 5e-3);
  EXPECT_GT(sup_diff(refined.H, same.H), 0.0);  // but not an inverse crime
  EXPECT_EQ(refined.provenance.refinement, 2);
  EXPECT_EQ(refined.H.grid().nx(), 24);
}

TEST(RefinedSynthesis, LinearCaseConsistency) {
  SpatialGrid grid(1.0, 1.0, 16, 16);
  const CoefficientProvider provider = constant_provider(1.2, 0.0, 0.5, 8);
  GeneralSource g = GeneralSource::constant(1.0);
  RefinedSynthesisConfig cfg;
  cfg.factor = 2;
  cfg.solver.inner.ray_step = 1.0 / 32;
  cfg.solver.enforce_admissibility = false;
  const InternalDatum datum = synthesize_on_refined(provider, grid, g, cfg, {"H"});
  EXPECT_GT(datum.H.min(), 0.0);
  EXPECT_LT(datum.H.max(), 1.2 * 1.0 + 1e-9);
  EXPECT_THROW(synthesize_on_refined(provider, grid, g, RefinedSynthesisConfig{1, cfg.solver}, {}),
               std::invalid_argument);
}

TEST(DataBounds, AdmissibleSourceKeepsDatumInTheBox) {
  SpatialGrid grid(1.0, 1.0, 16, 16);
  PhantomSpec spec;
  spec.kind = PhantomSpec::Kind::gaussian_inclusions;
  spec.sigma_a_bg = 1.0;
  spec.sigma_a_amp = 0.3;
  spec.sigma_b_bg = 0.4;
  spec.sigma_b_amp = 0.1;
  spec.sigma_s_bg = 0.8;
  spec.bumps = {GaussianBump{0.5, 0.5, 0.2}};
  const CoefficientSet coeffs = make_phantom(spec, grid, ScatteringKernel::isotropic(8));
  const double gbar = 0.9;
  GeneralSource g = GeneralSource::constant(gbar);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 32;
  const SemilinearResult res = solve_semilinear(coeffs, g, cfg);
  const InternalDatum datum = synthesize(coeffs, res.u_avg, {});
  const double hi = (coeffs.bounds().sigma_a_hi + coeffs.bounds().sigma_b_hi * gbar) * gbar;
  EXPECT_LE(datum.H.max(), hi + 1e-10);
  const double floor = coeffs.bounds().sigma_a_lo * gbar *
                       std::exp(-(coeffs.bounds().sigma_a_hi + coeffs.bounds().sigma_s_hi +
                                  gbar * coeffs.bounds().sigma_b_hi) *
                                grid.diameter());
  EXPECT_GE(datum.H.min(), floor - 1e-9);
  EXPECT_GT(datum.H.min(), 0.0);
}

TEST(DataOrdering, LargerSourceLargerDatum) {
  SpatialGrid grid(1.0, 1.0, 12, 12);
  const CoefficientProvider provider = constant_provider(1.0, 0.5, 0.7, 8);
  const CoefficientSet coeffs = provider(grid);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 24;
  const SemilinearResult u1 = solve_semilinear(coeffs, GeneralSource::constant(1.0), cfg);
  const SemilinearResult u2 = solve_semilinear(coeffs, GeneralSource::constant(0.6), cfg);
  const InternalDatum H1 = synthesize(coeffs, u1.u_avg, {});
  const InternalDatum H2 = synthesize(coeffs, u2.u_avg, {});
  for (std::size_t c = 0; c < H1.H.size(); ++c) EXPECT_GT(H1.H[c], H2.H[c]);
}
