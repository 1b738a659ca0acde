#include <gtest/gtest.h>

#include <cmath>

#include "tprt/data_synthesis.hpp"
#include "tprt/forward_semilinear.hpp"
#include "tprt/phantom.hpp"

using namespace tprt;

namespace {

CoefficientSet constant_medium(const SpatialGrid& grid, double sa, double sb, double ss,
                               const ScatteringKernel& kern) {
  CoefficientBounds b{sa, sa, sb, sb, ss, ss};
  return CoefficientSet(ScalarField(grid, sa), ScalarField(grid, sb), ScalarField(grid, ss), kern,
                        b);
}

double bernoulli_profile(double g0, double sa, double sb, double t) {
  return 1.0 / ((1.0 / g0 + sb / sa) * std::exp(sa * t) - sb / sa);
}

}  // namespace

TEST(SourceSmallness, NonScatteringClause) {
  SpatialGrid grid(1.0, 1.0, 8, 8);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  // inf sigma_a / sigma_b = 2
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 0.5, 0.0, kern);
  const AdmissibilityReport ok = check_source_smallness(0.1, 1.5, coeffs);
  EXPECT_TRUE(ok.smallness_ok);
  EXPECT_EQ(ok.clause, SmallnessClause::absorption_ratio);
  EXPECT_DOUBLE_EQ(ok.ceiling, 2.0);

  const AdmissibilityReport too_big = check_source_smallness(0.1, 2.5, coeffs);
  EXPECT_FALSE(too_big.smallness_ok);

  const AdmissibilityReport zero_inf = check_source_smallness(0.0, 1.5, coeffs);
  EXPECT_FALSE(zero_inf.smallness_ok);
}

TEST(SourceSmallness, ScatteringClauseUsesTheMax) {
  SpatialGrid grid(1.0, 1.0, 8, 8);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);  // theta_min = 1
  // inf sigma_a/sigma_b = 1, 2 theta_min inf sigma_s/sigma_b = 4
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 1.0, 2.0, kern);
  const AdmissibilityReport rep = check_source_smallness(0.1, 3.0, coeffs);
  EXPECT_TRUE(rep.smallness_ok);
  EXPECT_EQ(rep.clause, SmallnessClause::scattering_ratio);
  EXPECT_DOUBLE_EQ(rep.ceiling, 4.0);
}

TEST(SourceSmallness, CollimatedContractionHandValue) {
  SpatialGrid grid(1.0, 1.0, 8, 8);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  // mu = 0.4/(0.6+0.4) = 0.4, kappa = 0.2/(0.6+0.4) = 0.2, theta_max = 1
  const CoefficientSet coeffs = constant_medium(grid, 0.6, 0.2, 0.4, kern);
  const AdmissibilityReport rep = check_source_smallness(1.0, 1.0, coeffs);
  EXPECT_NEAR(rep.mu, 0.4, 1e-14);
  EXPECT_NEAR(rep.kappa, 0.2, 1e-14);
  const double expect =
      (1.0 + (0.4 * 0.4 * 1.0 / 0.6 + 0.4) + 0.4 * 1.0 / (0.6 * 0.6)) * 0.2 * 1.0;
  EXPECT_NEAR(rep.contraction, expect, 1e-13);
  EXPECT_TRUE(rep.collimated_ok);
}

TEST(SolveSemilinear, ZeroTwoPhotonMatchesLinear) {
  SpatialGrid grid(1.0, 1.0, 20, 20);
  AngularGrid angles(8);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 0.0, 1.0, kern);
  GeneralSource g = GeneralSource::constant(0.8);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 40;
  cfg.inner.tol_source = 1e-12;
  cfg.enforce_admissibility = false;  // sigma_b == 0 has no finite ratio ceiling to violate
  const SemilinearResult res = solve_semilinear(coeffs, g, cfg);
  const LinearSolveResult lin =
      solve_linear(coeffs.sigma_a(), coeffs.sigma_s(), kern, g, angles, cfg.inner);
  EXPECT_LT(sup_diff(res.u_avg, angular_average(lin.u)), cfg.tol_fixed_point);
}

TEST(SolveSemilinear, MaximumPrincipleStrictInterior) {
  SpatialGrid grid(1.0, 1.0, 20, 20);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 0.5, 1.0, kern);
  const double gbar = 1.0;
  GeneralSource g = GeneralSource::constant(gbar);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 40;
  const SemilinearResult res = solve_semilinear(coeffs, g, cfg);
  EXPECT_LE(res.u.max(), gbar + 1e-12);
  for (std::size_t c = 0; c < res.u_avg.size(); ++c) EXPECT_LT(res.u_avg[c], gbar);
  EXPECT_GT(res.u.min(), 0.0);
}

TEST(SolveSemilinear, PositivityFloor) {
  SpatialGrid grid(1.0, 1.0, 16, 16);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 0.4, 0.8, kern);
  const double gbar = 1.0;
  GeneralSource g = GeneralSource::constant(gbar);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 32;
  const SemilinearResult res = solve_semilinear(coeffs, g, cfg);
  const double floor = gbar * std::exp(-(1.0 + 0.8 + gbar * 0.4) * grid.diameter()) - 1e-8;
  EXPECT_GE(res.u_avg.min(), floor);
}

TEST(SolveSemilinear, TwoStartUniqueness) {
  SpatialGrid grid(1.0, 1.0, 16, 16);
  const ScatteringKernel kern = ScatteringKernel::peaked(8, 0.3);
  const CoefficientSet coeffs = constant_medium(grid, 1.1, 0.5, 1.0, kern);
  GeneralSource g = GeneralSource::constant(0.9);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 32;
  cfg.inner.tol_source = 1e-12;
  const SemilinearResult from_zero = solve_semilinear(coeffs, g, cfg, ScalarField(grid, 0.0));
  const SemilinearResult from_gbar = solve_semilinear(coeffs, g, cfg, ScalarField(grid, g.sup()));
  EXPECT_LE(sup_diff(from_zero.u_avg, from_gbar.u_avg), 2.0 * cfg.tol_fixed_point);
}

TEST(SolveSemilinear, MonotoneSourceResponse) {
  SpatialGrid grid(1.0, 1.0, 16, 16);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 0.5, 1.0, kern);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 32;
  cfg.inner.tol_source = 1e-12;
  const SemilinearResult hi = solve_semilinear(coeffs, GeneralSource::constant(1.0), cfg);
  const SemilinearResult lo = solve_semilinear(coeffs, GeneralSource::constant(0.6), cfg);
  for (std::size_t c = 0; c < hi.u_avg.size(); ++c)
    EXPECT_GE(hi.u_avg[c], lo.u_avg[c] - 1e-9);
}

TEST(SolveSemilinear, DataConsistencyIdentity) {
  SpatialGrid grid(1.0, 1.0, 12, 12);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 0.5, 0.7, kern);
  GeneralSource g = GeneralSource::constant(0.9);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 24;
  const SemilinearResult res = solve_semilinear(coeffs, g, cfg);
  const InternalDatum datum = synthesize(coeffs, res.u_avg, {"identity"});
  for (std::size_t c = 0; c < res.u_avg.size(); ++c) {
    const double rederived = coeffs.sigma_a()[c] * res.u_avg[c] +
                             coeffs.sigma_b()[c] * res.u_avg[c] * res.u_avg[c];
    EXPECT_DOUBLE_EQ(datum.H[c], rederived);
  }
}

TEST(SolveSemilinear, RejectsInadmissibleUnlessWaived) {
  SpatialGrid grid(1.0, 1.0, 12, 12);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 1.0, 0.0, kern);  // ceiling = 1
  GeneralSource g = GeneralSource::constant(1.8);
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 24;
  EXPECT_THROW(solve_semilinear(coeffs, g, cfg), std::invalid_argument);
  cfg.enforce_admissibility = false;
  EXPECT_NO_THROW(solve_semilinear(coeffs, g, cfg));
}

TEST(Collimated, FreeTransportMatchesBernoulliProfile) {
  SpatialGrid grid(1.0, 1.0, 128, 8);
  const ScatteringKernel kern = ScatteringKernel::isotropic(4);
  const double sa = 1.0, sb = 0.5, g0 = 0.5;
  const CoefficientSet coeffs = constant_medium(grid, sa, sb, 0.0, kern);
  const CollimatedSource src = CollimatedSource::uniform(g0, {1.0, 0.0});
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 512;
  cfg.tol_fixed_point = 1e-10;
  const CollimatedResult res = solve_semilinear_collimated(coeffs, src, cfg);
  EXPECT_DOUBLE_EQ(res.sol.scattered.max(), 0.0);
  double worst = 0.0;
  for (int i = 0; i < grid.nx(); ++i) {
    const double t = grid.center(i, 3).x;
    worst = std::max(worst, std::abs(res.u_avg(i, 3) - bernoulli_profile(g0, sa, sb, t)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Collimated, ZeroTwoPhotonMatchesLinearSplit) {
  SpatialGrid grid(1.0, 1.0, 24, 24);
  AngularGrid angles(8);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  const CoefficientSet coeffs = constant_medium(grid, 1.0, 0.0, 0.8, kern);
  const CollimatedSource src = CollimatedSource::uniform(1.0, {1.0, 0.0});
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 48;
  cfg.inner.tol_source = 1e-12;
  const CollimatedResult res = solve_semilinear_collimated(coeffs, src, cfg);

  // linear reference: attenuated beam + zero-inflow solve with the beam source
  ScalarField sigma_t(grid);
  for (std::size_t c = 0; c < sigma_t.size(); ++c)
    sigma_t[c] = coeffs.sigma_a()[c] + coeffs.sigma_s()[c];
  const ScalarField beam = detail::beam_attenuation(grid, sigma_t, src, cfg.inner.ray_step);
  EXPECT_LT(sup_diff(beam, res.sol.ballistic), 1e-12);
  PhaseField f(grid, angles);
  for (int k = 0; k < angles.size(); ++k)
    for (std::size_t c = 0; c < beam.size(); ++c)
      f[f.slice_offset(k) + c] = coeffs.sigma_s()[c] * beam[c];
  const LinearSolveResult ref = solve_linear_internal_source(
      coeffs.sigma_a(), coeffs.sigma_s(), kern, GeneralSource::constant(0.0), &f, angles,
      cfg.inner);
  EXPECT_LT(sup_diff(ref.u, res.sol.scattered), 1e-9);
}

TEST(Collimated, ScatteredBoundHolds) {
  SpatialGrid grid(1.0, 1.0, 20, 20);
  const ScatteringKernel kern = ScatteringKernel::isotropic(8);
  // mu = 0.4, theta_max = 1, profile sup = 1 -> bound 0.4/0.6
  const CoefficientSet coeffs = constant_medium(grid, 0.6, 0.05, 0.4, kern);
  const CollimatedSource src = CollimatedSource::uniform(1.0, {1.0, 0.0});
  SemilinearConfig cfg;
  cfg.inner.ray_step = 1.0 / 40;
  const CollimatedResult res = solve_semilinear_collimated(coeffs, src, cfg);
  EXPECT_NEAR(res.scatter_bound, 0.4 / 0.6, 1e-12);
  EXPECT_TRUE(res.scatter_bound_ok);
  double sup_s = res.sol.scattered.max();
  EXPECT_LE(sup_s, res.scatter_bound + 1e-9);
  // density decomposes as ballistic + <scattered>
  const ScalarField dens = res.sol.density();
  EXPECT_LT(sup_diff(dens, res.u_avg), 1e-12);
}

TEST(PointSourceDensity, ConstantAbsorptionClosedForm) {
  SpatialGrid grid(1.0, 1.0, 48, 48);
  const ScatteringKernel kern = ScatteringKernel::isotropic(4);
  const double sa = 1.0;
  ScalarField a(grid, sa), b(grid, 0.0), s(grid, 0.0);
  CoefficientBounds bounds{sa, sa, 0.0, 0.0, 0.0, 0.0};
  const CoefficientSet coeffs(a, b, s, kern, bounds);
  const PointSource src{{0.0, 0.5}, 2.0, 0.1};
  const ScalarField dens = point_source_density(coeffs, src, 1e-3);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      const Vec2 d = grid.center(i, j) - src.site;
      const double t = d.norm();
      const double cosang = std::abs(d.x / t);  // |n.v| for the left-edge source
      const double expect = 2.0 * cosang * std::exp(-sa * t) / t;
      EXPECT_NEAR(dens(i, j), expect, 1e-9 * 2.0 / t);
    }
}

TEST(PointSourceDensity, RequiresClearDiscAndFreeTransport) {
  SpatialGrid grid(1.0, 1.0, 16, 16);
  const ScatteringKernel kern = ScatteringKernel::isotropic(4);
  ScalarField a(grid, 1.0), b(grid, 0.5), s(grid, 0.0);
  CoefficientBounds bounds{1.0, 1.0, 0.5, 0.5, 0.0, 0.0};
  const CoefficientSet coeffs(a, b, s, kern, bounds);
  const PointSource src{{0.0, 0.5}, 1.0, 0.2};
  EXPECT_THROW(point_source_density(coeffs, src, 1e-2), std::invalid_argument);

  ScalarField s_pos(grid, 1.0);
  CoefficientBounds bs{1.0, 1.0, 0.5, 0.5, 1.0, 1.0};
  const CoefficientSet scattering(a, b, s_pos, kern, bs);
  EXPECT_THROW(point_source_density(scattering, src, 1e-2), std::invalid_argument);
}
