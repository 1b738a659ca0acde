#ifndef TPRT_EXPERIMENT_HPP_
#define TPRT_EXPERIMENT_HPP_
//! \file experiment.hpp
//  \brief Subcommand implementations behind the command-line driver: forward
//         solves, data synthesis, both reconstruction pipelines, the isotropic
//         certificate, and the self-verification suite. Every run writes its
//         artifacts atomically and reports into a single JSON document.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tprt/config.hpp"
#include "tprt/csv_io.hpp"
#include "tprt/data_synthesis.hpp"
#include "tprt/forward_semilinear.hpp"
#include "tprt/isotropic_oracle.hpp"
#include "tprt/phantom.hpp"
#include "tprt/recon_free.hpp"
#include "tprt/recon_scatter.hpp"
#include "tprt/rng.hpp"

namespace tprt {

using nlohmann::json;

namespace exp {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline CoefficientSet build_coefficients(const ExperimentConfig& cfg, const SpatialGrid& grid) {
  const ScatteringKernel kernel = cfg.coefficients.kernel.build(cfg.n_v);
  if (cfg.coefficients.phantom) return make_phantom(*cfg.coefficients.phantom, grid, kernel);

  ScalarField sa = read_scalar_csv(*cfg.coefficients.sigma_a_csv);
  ScalarField sb = read_scalar_csv(*cfg.coefficients.sigma_b_csv);
  ScalarField ss = read_scalar_csv(*cfg.coefficients.sigma_s_csv);
  auto regrid = [&](const ScalarField& f) {
    if (f.grid().same_layout(grid)) return f;
    return ScalarField::from_function(grid, [&](Vec2 p) { return interpolate(f, p); });
  };
  sa = regrid(sa);
  sb = regrid(sb);
  ss = regrid(ss);
  CoefficientBounds b;
  b.sigma_a_lo = sa.min();
  b.sigma_a_hi = sa.max();
  b.sigma_b_lo = sb.min();
  b.sigma_b_hi = sb.max();
  b.sigma_s_lo = ss.min();
  b.sigma_s_hi = ss.max();
  return CoefficientSet(std::move(sa), std::move(sb), std::move(ss), kernel, b);
}

inline CoefficientProvider coefficient_provider(const ExperimentConfig& cfg) {
  return [cfg](const SpatialGrid& grid) { return build_coefficients(cfg, grid); };
}

inline json admissibility_json(const AdmissibilityReport& rep) {
  json j;
  j["smallness_ok"] = rep.smallness_ok;
  j["clause"] = rep.clause == SmallnessClause::none
                    ? "none"
                    : (rep.clause == SmallnessClause::absorption_ratio ? "absorption_ratio"
                                                                       : "scattering_ratio");
  j["ceiling"] = rep.ceiling;
  j["mu"] = rep.mu;
  j["kappa"] = rep.kappa;
  j["contraction"] = rep.contraction;
  j["collimated_ok"] = rep.collimated_ok;
  return j;
}

inline json provenance_json(const Provenance& p) {
  json j;
  j["source_id"] = p.source_id;
  j["nx"] = p.nx;
  j["ny"] = p.ny;
  j["n_v"] = p.n_v;
  j["noise_level"] = p.noise_level;
  j["seed"] = p.seed;
  j["refinement"] = p.refinement;
  return j;
}

struct TruthError {
  double rel_sup_a = 0.0, rel_sup_b = 0.0;
  double l2_a = 0.0, l2_b = 0.0;
  double masked_fraction = 0.0;
};

inline TruthError pair_errors(const ReconPair& pair, const CoefficientSet& truth) {
  TruthError e;
  double sup_da = 0.0, sup_db = 0.0, l2a = 0.0, l2b = 0.0;
  const double ref_a = truth.sigma_a().sup_norm();
  const double ref_b = std::max(truth.sigma_b().sup_norm(), 1e-300);
  for (std::size_t c = 0; c < pair.sigma_a_rec.size(); ++c) {
    if (pair.masked(c)) continue;
    const double da = std::abs(pair.sigma_a_rec[c] - truth.sigma_a()[c]);
    const double db = std::abs(pair.sigma_b_rec[c] - truth.sigma_b()[c]);
    sup_da = std::max(sup_da, da);
    sup_db = std::max(sup_db, db);
    l2a += da * da;
    l2b += db * db;
  }
  e.rel_sup_a = sup_da / ref_a;
  e.rel_sup_b = sup_db / ref_b;
  e.l2_a = std::sqrt(l2a * truth.grid().cell_area());
  e.l2_b = std::sqrt(l2b * truth.grid().cell_area());
  e.masked_fraction = pair.masked_fraction();
  return e;
}

inline json truth_error_json(const TruthError& e) {
  json j;
  j["rel_sup_sigma_a"] = e.rel_sup_a;
  j["rel_sup_sigma_b"] = e.rel_sup_b;
  j["l2_sigma_a"] = e.l2_a;
  j["l2_sigma_b"] = e.l2_b;
  j["masked_fraction"] = e.masked_fraction;
  return j;
}

inline void write_mask_csv(const std::filesystem::path& path, const SpatialGrid& grid,
                           const std::vector<std::uint8_t>& mask) {
  ScalarField m(grid);
  for (std::size_t c = 0; c < mask.size(); ++c) m[c] = mask[c] ? 1.0 : 0.0;
  write_scalar_csv(path, m);
}

// Reads a datum CSV together with its provenance sidecar when one sits next
// to it (<stem>_provenance.json).
inline InternalDatum read_datum(const std::filesystem::path& csv_path,
                                const std::string& fallback_id) {
  InternalDatum datum{read_scalar_csv(csv_path), {fallback_id}};
  datum.provenance.nx = datum.H.grid().nx();
  datum.provenance.ny = datum.H.grid().ny();
  std::filesystem::path sidecar = csv_path;
  sidecar.replace_filename(csv_path.stem().string() + "_provenance.json");
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    json pj;
    in >> pj;
    datum.provenance.source_id = pj.value("source_id", fallback_id);
    datum.provenance.n_v = pj.value("n_v", 0);
    datum.provenance.noise_level = pj.value("noise_level", 0.0);
    datum.provenance.seed = pj.value("seed", 0ULL);
    datum.provenance.refinement = pj.value("refinement", 1);
  }
  return datum;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

inline void run_forward(const ExperimentConfig& cfg, const std::filesystem::path& out, json& rep) {
  const SpatialGrid grid = cfg.grid();
  const CoefficientSet coeffs = build_coefficients(cfg, grid);
  const bool write_phase = cfgdetail::bool_or(cfg.task, "task", "write_phase_field", false);
  Stopwatch watch;

  if (cfg.source.type == "general") {
    const GeneralSource g = GeneralSource::constant(cfg.source.value);
    SemilinearResult res = solve_semilinear(coeffs, g, cfg.solver.semilinear());
    write_scalar_csv(out / "u_avg.csv", res.u_avg);
    if (write_phase) write_phase_csv(out / "u_phase.csv", res.u);
    rep["forward"]["outer_iterations"] = res.outer_iterations;
    rep["forward"]["gap_history"] = res.gap_history;
    rep["forward"]["posteriori_residual"] = res.posteriori_residual;
    rep["forward"]["admissibility"] = admissibility_json(res.admissibility);
  } else if (cfg.source.type == "collimated") {
    const CollimatedSource src = CollimatedSource::uniform(cfg.source.value, cfg.source.direction);
    CollimatedResult res = solve_semilinear_collimated(coeffs, src, cfg.solver.semilinear());
    write_scalar_csv(out / "u_avg.csv", res.u_avg);
    write_scalar_csv(out / "ballistic.csv", res.sol.ballistic);
    if (write_phase) write_phase_csv(out / "scattered.csv", res.sol.scattered);
    rep["forward"]["outer_iterations"] = res.outer_iterations;
    rep["forward"]["gap_history"] = res.gap_history;
    rep["forward"]["scatter_bound"] = res.scatter_bound;
    rep["forward"]["scatter_bound_ok"] = res.scatter_bound_ok;
    rep["forward"]["admissibility"] = admissibility_json(res.admissibility);
  } else {  // point
    const PointSource src{cfg.source.site, cfg.source.value, cfg.source.clear_radius};
    ScalarField u_avg = point_source_density(coeffs, src, cfg.solver.ray_step);
    write_scalar_csv(out / "u_avg.csv", u_avg);
    rep["forward"]["note"] = "free-transport point-source density";
  }
  rep["timings_ms"]["forward"] = watch.ms();
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline InternalDatum synthesize_configured(const ExperimentConfig& cfg, const SpatialGrid& grid,
                                           double strength, const std::string& source_id,
                                           int refinement) {
  RefinedSynthesisConfig scfg;
  scfg.factor = refinement;
  scfg.solver = cfg.solver.semilinear();
  Provenance prov;
  prov.source_id = source_id;
  prov.n_v = cfg.n_v;
  const CoefficientProvider provider = coefficient_provider(cfg);
  if (cfg.source.type == "general")
    return synthesize_on_refined(provider, grid, GeneralSource::constant(strength), scfg, prov);
  if (cfg.source.type == "collimated")
    return synthesize_on_refined(provider, grid,
                                 CollimatedSource::uniform(strength, cfg.source.direction), scfg,
                                 prov);
  return synthesize_on_refined(provider, grid,
                               PointSource{cfg.source.site, strength, cfg.source.clear_radius},
                               scfg, prov);
}

inline void run_synth(const ExperimentConfig& cfg, const std::filesystem::path& out, json& rep) {
  cfgdetail::require_keys(cfg.task, "task", {"refinement", "noise", "source_id"});
  const int refinement = cfgdetail::int_or(cfg.task, "task", "refinement", 2);
  const double noise = cfgdetail::number_or(cfg.task, "task", "noise", 0.0);
  const std::string source_id =
      cfg.task.contains("source_id") ? cfg.task.at("source_id").get<std::string>() : "H1";
  Stopwatch watch;
  InternalDatum datum =
      synthesize_configured(cfg, cfg.grid(), cfg.source.value, source_id, refinement);
  if (noise > 0.0) datum = add_noise(datum, noise, cfg.seed);
  write_scalar_csv(out / (source_id + ".csv"), datum.H);
  atomic_write_text(out / (source_id + "_provenance.json"),
                    provenance_json(datum.provenance).dump(2) + "\n");
  rep["synth"]["provenance"] = provenance_json(datum.provenance);
  rep["synth"]["H_min"] = datum.H.min();
  rep["synth"]["H_max"] = datum.H.max();
  rep["timings_ms"]["synth"] = watch.ms();
}

// ---------------------------------------------------------------------------
// recon-free
// ---------------------------------------------------------------------------

inline void run_recon_free(const ExperimentConfig& cfg, const std::filesystem::path& out,
                           json& rep) {
  cfgdetail::require_keys(
      cfg.task, "task", {"strength2", "det_floor", "refinement", "recon_step", "data",
                         "min_incidence"});
  const SpatialGrid grid = cfg.grid();
  const double g1 = cfg.source.value;
  const double g2 = cfgdetail::require_number(cfg.task, "task", "strength2");
  const int refinement = cfgdetail::int_or(cfg.task, "task", "refinement", 2);
  const double default_step = 0.5 * std::min(grid.dx(), grid.dy());
  const double recon_step = cfgdetail::number_or(cfg.task, "task", "recon_step", default_step);
  const double det_floor =
      cfgdetail::number_or(cfg.task, "task", "det_floor", 1e-8 * std::abs(g1 - g2));
  const double min_incidence = cfgdetail::number_or(cfg.task, "task", "min_incidence", 0.1);

  const CoefficientSet truth = build_coefficients(cfg, grid);
  if (truth.has_scattering())
    throw ConfigError("recon-free requires sigma_s == 0 (use recon-scatter instead)");

  Stopwatch synth_watch;
  std::optional<InternalDatum> H1, H2;
  if (cfg.task.contains("data")) {
    const json& dj = cfg.task.at("data");
    cfgdetail::require_keys(dj, "task.data", {"H1", "H2"});
    H1 = read_datum(cfgdetail::require_string(dj, "task.data", "H1"), "H1");
    H2 = read_datum(cfgdetail::require_string(dj, "task.data", "H2"), "H2");
    if (!H1->H.grid().same_layout(grid) || !H2->H.grid().same_layout(grid))
      throw ConfigError("recon-free: supplied data grids do not match the configured grid");
  } else {
    H1 = synthesize_configured(cfg, grid, g1, "H1", refinement);
    H2 = synthesize_configured(cfg, grid, g2, "H2", refinement);
  }
  rep["timings_ms"]["synthesis"] = synth_watch.ms();

  Stopwatch recon_watch;
  std::optional<DensityRecovery> rec1, rec2;
  if (cfg.source.type == "collimated") {
    const CollimatedSource s1 = CollimatedSource::uniform(g1, cfg.source.direction);
    const CollimatedSource s2 = CollimatedSource::uniform(g2, cfg.source.direction);
    rec1 = recover_density_collimated(*H1, s1, recon_step);
    rec2 = recover_density_collimated(*H2, s2, recon_step);
  } else if (cfg.source.type == "point") {
    const PointSource s1{cfg.source.site, g1, cfg.source.clear_radius};
    const PointSource s2{cfg.source.site, g2, cfg.source.clear_radius};
    rec1 = recover_density_point(*H1, s1, cfg.source.clear_radius, recon_step, min_incidence);
    rec2 = recover_density_point(*H2, s2, cfg.source.clear_radius, recon_step, min_incidence);
  } else {
    throw ConfigError("recon-free: source.type must be collimated or point");
  }
  ReconPair pair = solve_pointwise_pair(*rec1, *rec2, *H1, *H2, det_floor);
  rep["timings_ms"]["reconstruction"] = recon_watch.ms();

  write_scalar_csv(out / "sigma_a_rec.csv", pair.sigma_a_rec);
  write_scalar_csv(out / "sigma_b_rec.csv", pair.sigma_b_rec);
  write_scalar_csv(out / "conditioning.csv", pair.conditioning);
  write_mask_csv(out / "mask.csv", grid, pair.mask);
  write_scalar_csv(out / "phi1.csv", rec1->phi);
  write_scalar_csv(out / "phi2.csv", rec2->phi);

  rep["recon"]["masked_fraction"] = pair.masked_fraction();
  rep["recon"]["inconsistent_cells"] = rec1->inconsistent_cells + rec2->inconsistent_cells;
  if (cfg.coefficients.phantom)
    rep["recon"]["error_vs_truth"] = truth_error_json(pair_errors(pair, truth));
}

// ---------------------------------------------------------------------------
// recon-scatter
// ---------------------------------------------------------------------------

inline ScatterReconConfig scatter_config(const ExperimentConfig& cfg, const CoefficientSet& truth,
                                         double g_bar) {
  ScatterReconConfig rc;
  rc.sigma_a_hi = truth.bounds().sigma_a_hi;
  rc.sigma_b_hi = truth.bounds().sigma_b_hi;
  rc.sigma_a_lo = truth.bounds().sigma_a_lo;
  rc.sigma_b_lo = truth.bounds().sigma_b_lo;
  rc.g_bar = g_bar;
  rc.tol_fp = cfg.solver.tol_fixed_point;
  rc.max_iters = cfg.solver.max_outer_iters;
  rc.inner = cfg.solver.linear();
  if (cfg.task.contains("bounds")) {
    const json& bj = cfg.task.at("bounds");
    cfgdetail::require_keys(bj, "task.bounds",
                            {"sigma_a_hi", "sigma_b_hi", "sigma_a_lo", "sigma_b_lo"});
    rc.sigma_a_hi = cfgdetail::require_number(bj, "task.bounds", "sigma_a_hi");
    rc.sigma_b_hi = cfgdetail::require_number(bj, "task.bounds", "sigma_b_hi");
    rc.sigma_a_lo = cfgdetail::number_or(bj, "task.bounds", "sigma_a_lo", 0.0);
    rc.sigma_b_lo = cfgdetail::number_or(bj, "task.bounds", "sigma_b_lo", 0.0);
  }
  return rc;
}

inline void run_recon_scatter(const ExperimentConfig& cfg, const std::filesystem::path& out,
                              json& rep) {
  cfgdetail::require_keys(cfg.task, "task",
                          {"g2", "det_floor", "refinement", "bounds", "stability", "pi_alpha"});
  if (cfg.source.type != "general")
    throw ConfigError("recon-scatter: source.type must be general");
  const SpatialGrid grid = cfg.grid();
  const CoefficientSet truth = build_coefficients(cfg, grid);
  const double g1 = cfg.source.value;
  const double g2 = cfgdetail::require_number(cfg.task, "task", "g2");
  const int refinement = cfgdetail::int_or(cfg.task, "task", "refinement", 2);
  const double det_floor =
      cfgdetail::number_or(cfg.task, "task", "det_floor", 1e-6 * std::max(g1, g2));
  const bool want_pi_alpha = cfgdetail::bool_or(cfg.task, "task", "pi_alpha", true);

  const GeneralSource src1 = GeneralSource::constant(g1);
  const GeneralSource src2 = GeneralSource::constant(g2);
  const ScatterReconConfig rc = scatter_config(cfg, truth, std::max(g1, g2));

  Stopwatch synth_watch;
  InternalDatum H1 = synthesize_configured(cfg, grid, g1, "H1", refinement);
  InternalDatum H2 = synthesize_configured(cfg, grid, g2, "H2", refinement);
  rep["timings_ms"]["synthesis"] = synth_watch.ms();

  Stopwatch recon_watch;
  ScatterPairResult res =
      recover_pair_scatter(H1, H2, src1, src2, truth.sigma_s(), truth.kernel(), rc, det_floor);
  rep["timings_ms"]["reconstruction"] = recon_watch.ms();

  write_scalar_csv(out / "sigma_a_rec.csv", res.pair.sigma_a_rec);
  write_scalar_csv(out / "sigma_b_rec.csv", res.pair.sigma_b_rec);
  write_scalar_csv(out / "conditioning.csv", res.pair.conditioning);
  write_mask_csv(out / "mask.csv", grid, res.pair.mask);
  write_scalar_csv(out / "Sigma_a1.csv", res.rec1.Sigma_a);
  write_scalar_csv(out / "Sigma_a2.csv", res.rec2.Sigma_a);

  {
    std::string hist = "source,iteration,gap\n";
    for (std::size_t i = 0; i < res.rec1.gap_history.size(); ++i)
      hist += "H1," + std::to_string(i + 1) + "," + detail::format_double(res.rec1.gap_history[i]) + "\n";
    for (std::size_t i = 0; i < res.rec2.gap_history.size(); ++i)
      hist += "H2," + std::to_string(i + 1) + "," + detail::format_double(res.rec2.gap_history[i]) + "\n";
    atomic_write_text(out / "gap_history.csv", hist);
  }

  rep["recon"]["masked_fraction"] = res.pair.masked_fraction();
  rep["recon"]["iterations_H1"] = res.rec1.iterations;
  rep["recon"]["iterations_H2"] = res.rec2.iterations;
  rep["recon"]["clamp_active_H1"] = res.rec1.clamp_active;
  rep["recon"]["clamp_active_H2"] = res.rec2.clamp_active;
  rep["recon"]["bracket_ok_H1"] = res.rec1.bracket.eta_below_u_min;
  rep["recon"]["bracket_ok_H2"] = res.rec2.bracket.eta_below_u_min;
  if (cfg.coefficients.phantom)
    rep["recon"]["error_vs_truth"] = truth_error_json(pair_errors(res.pair, truth));

  if (want_pi_alpha) {
    const PiAlphaReport pa = check_pi_alpha(res.rec1.Sigma_a, H1, src1, cfg.angles());
    json pj;
    pj["alpha_estimate"] = pa.alpha_estimate;
    pj["member"] = pa.member;
    pj["beta_estimate"] = pa.beta_estimate;
    pj["beta_ok"] = pa.beta_ok;
    pj["excluded_cells"] = pa.excluded_cells;
    rep["pi_alpha"] = pj;
    atomic_write_text(out / "pi_alpha.json", pj.dump(2) + "\n");
  }

  if (cfg.task.contains("stability")) {
    const json& sj = cfg.task.at("stability");
    cfgdetail::require_keys(sj, "task.stability", {"levels", "seeds"});
    std::vector<double> levels;
    for (const json& v : cfgdetail::require(sj, "task.stability", "levels")) {
      if (!v.is_number()) throw ConfigError("task.stability.levels: expected numbers");
      levels.push_back(v.get<double>());
    }
    std::vector<std::uint64_t> seeds;
    for (const json& v : cfgdetail::require(sj, "task.stability", "seeds")) {
      if (!v.is_number_integer()) throw ConfigError("task.stability.seeds: expected integers");
      seeds.push_back(make_stream(cfg.seed, "stability:" + std::to_string(v.get<long long>()))
                          .next_u64());
    }
    Stopwatch stab_watch;
    RefinedSynthesisConfig scfg;
    scfg.factor = refinement;
    scfg.solver = cfg.solver.semilinear();
    StabilityTable table = stability_probe(coefficient_provider(cfg), grid, src1, src2, scfg, rc,
                                           det_floor, levels, seeds);
    std::string csv = "level,seed,data_delta_l2,coeff_err_l2,ok\n";
    for (const StabilityRow& row : table.rows)
      csv += detail::format_double(row.noise_level) + "," + std::to_string(row.seed) + "," +
             detail::format_double(row.data_delta_l2) + "," +
             detail::format_double(row.coeff_err_l2) + "," + (row.ok ? "1" : "0") + "\n";
    atomic_write_text(out / "stability.csv", csv);
    rep["stability"]["baseline_err_l2"] = table.baseline_err_l2;
    rep["stability"]["rows"] = json::array();
    for (const StabilityRow& row : table.rows) {
      json rj;
      rj["level"] = row.noise_level;
      rj["seed"] = row.seed;
      rj["data_delta_l2"] = row.data_delta_l2;
      rj["coeff_err_l2"] = row.coeff_err_l2;
      rj["ok"] = row.ok;
      if (!row.note.empty()) rj["note"] = row.note;
      rep["stability"]["rows"].push_back(rj);
    }
    rep["timings_ms"]["stability"] = stab_watch.ms();
  }
}

// ---------------------------------------------------------------------------
// certify-isotropic
// ---------------------------------------------------------------------------

inline void run_certify(const ExperimentConfig& cfg, const std::filesystem::path& out, json& rep) {
  cfgdetail::require_keys(cfg.task, "task", {"refinement"});
  if (cfg.source.type != "general")
    throw ConfigError("certify-isotropic: source.type must be general");
  const SpatialGrid grid = cfg.grid();
  const CoefficientSet truth = build_coefficients(cfg, grid);
  if (!truth.kernel().is_isotropic())
    throw ConfigError("certify-isotropic: kernel must be isotropic");
  const int refinement = cfgdetail::int_or(cfg.task, "task", "refinement", 2);

  Stopwatch watch;
  InternalDatum H = synthesize_configured(cfg, grid, cfg.source.value, "H", refinement);
  ScatterReconConfig rc;
  rc.sigma_a_hi = truth.bounds().sigma_a_hi;
  rc.sigma_b_hi = truth.bounds().sigma_b_hi;
  rc.sigma_a_lo = truth.bounds().sigma_a_lo;
  rc.sigma_b_lo = truth.bounds().sigma_b_lo;
  rc.g_bar = cfg.source.value;
  rc.inner = cfg.solver.linear();
  const ScalarField eta = compute_eta(H, rc);
  IsotropicCertificate cert =
      uniqueness_certificate(H, truth.sigma_s(), cfg.source.value, eta, cfg.n_v,
                             cfg.solver.linear(), cfg.solver.tol_fixed_point,
                             cfg.solver.max_outer_iters);
  const IsotropicConstants& k = cert.constants;
  json cj;
  cj["alpha"] = k.alpha;
  cj["beta"] = k.beta;
  cj["ell"] = k.ell;
  cj["g_bar"] = k.g_bar;
  cj["eta_inf"] = k.eta_inf;
  cj["psi_uniqueness"] = k.psi_uniqueness;
  cj["psi_stability"] = k.psi_stability;
  cj["r_required"] = k.r_required;
  cj["stability_margin_ok"] = k.stability_margin_ok;
  cj["applicable"] = k.applicable;
  cj["verdict"] = k.verdict;
  cj["mu_h"] = k.mu_h;
  cj["mu_f"] = k.mu_f;
  cj["kappa"] = k.kappa;
  cj["gamma"] = k.gamma;
  cj["inflow_floor_margin"] = k.inflow_floor_margin;
  atomic_write_text(out / "isotropic_certificate.json", cj.dump(2) + "\n");
  write_scalar_csv(out / "fixed_point_upper.csv", cert.fixed_point_upper);
  write_scalar_csv(out / "fixed_point_lower.csv", cert.fixed_point_lower);
  rep["certificate"] = cj;
  rep["timings_ms"]["certify"] = watch.ms();
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline void run_verify(const ExperimentConfig& cfg, const std::filesystem::path& out, json& rep) {
  cfgdetail::require_keys(cfg.task, "task", {"phantoms"});
  const int n_phantoms = cfgdetail::int_or(cfg.task, "task", "phantoms", 3);
  std::vector<VerifyCheck> checks;
  Stopwatch watch;

  // kernel invariants
  {
    VerifyCheck c{"kernel_normalization", true, ""};
    try {
      ScatteringKernel::isotropic(cfg.n_v).validate(1e-12);
      ScatteringKernel::peaked(cfg.n_v, 0.3).validate(1e-12);
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
    }
    checks.push_back(c);
  }

  // scattering conserves the angular average
  {
    VerifyCheck c{"scattering_conservation", false, ""};
    const SpatialGrid small(cfg.Lx, cfg.Ly, 8, 8);
    const AngularGrid angles(cfg.n_v);
    PhaseField u(small, angles);
    Rng rng = make_stream(cfg.seed, "verify:conservation");
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = rng.uniform();
    const ScatteringKernel kernel = ScatteringKernel::peaked(cfg.n_v, 0.4);
    const double err = sup_diff(angular_average(apply_scattering(kernel, u)), angular_average(u));
    c.pass = err < 1e-12;
    c.detail = "sup deviation " + std::to_string(err);
    checks.push_back(c);
  }

  // chord identity for the tracer
  {
    VerifyCheck c{"ray_chord_identity", true, ""};
    const SpatialGrid grid = cfg.grid();
    Rng rng = make_stream(cfg.seed, "verify:chords");
    for (int trial = 0; trial < 64 && c.pass; ++trial) {
      const Vec2 x{rng.uniform(0.05, 0.95) * grid.Lx(), rng.uniform(0.05, 0.95) * grid.Ly()};
      const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const Vec2 v{std::cos(t), std::sin(t)};
      const double chord = trace_to_boundary(grid, x, v).tau + trace_to_boundary(grid, x, {-v.x, -v.y}).tau;
      // analytic chord length through x along the line with direction v
      const auto exit_dist = [&](Vec2 dir) {
        double s = std::numeric_limits<double>::infinity();
        if (dir.x > 0.0) s = std::min(s, (grid.Lx() - x.x) / dir.x);
        if (dir.x < 0.0) s = std::min(s, -x.x / dir.x);
        if (dir.y > 0.0) s = std::min(s, (grid.Ly() - x.y) / dir.y);
        if (dir.y < 0.0) s = std::min(s, -x.y / dir.y);
        return s;
      };
      const double fwd = exit_dist(v);
      const double bwd = exit_dist({-v.x, -v.y});
      if (std::abs(chord - (fwd + bwd)) > 1e-12 * grid.diameter()) {
        c.pass = false;
        c.detail = "chord mismatch at trial " + std::to_string(trial);
      }
      if (trace_to_boundary(grid, x, v).tau > grid.diameter() + 1e-12) {
        c.pass = false;
        c.detail = "tau exceeds diameter";
      }
    }
    checks.push_back(c);
  }

  // forward solves on randomized admissible phantoms: bounds and positivity
  {
    const SpatialGrid grid(cfg.Lx, cfg.Ly, std::min(cfg.nx, 40), std::min(cfg.ny, 40));
    Rng rng = make_stream(cfg.seed, "verify:phantoms");
    RandomPhantomRanges ranges;
    const ScatteringKernel kernel = cfg.coefficients.kernel.build(cfg.n_v);
    for (int p = 0; p < n_phantoms; ++p) {
      VerifyCheck c{"max_principle_positivity_" + std::to_string(p), false, ""};
      try {
        const PhantomSpec spec = random_phantom_spec(rng, ranges);
        const CoefficientSet coeffs = make_phantom(spec, grid, kernel);
        AdmissibilityReport probe = check_source_smallness(1.0, 1.0, coeffs);
        const double g_sup = 0.9 * std::min(probe.ceiling, 1.5);
        const GeneralSource g = GeneralSource::constant(g_sup);
        SemilinearConfig scfg = cfg.solver.semilinear();
        scfg.inner.ray_step = std::min(grid.dx(), grid.dy()) / 2.0;
        SemilinearResult res = solve_semilinear(coeffs, g, scfg);
        const double floor =
            g_sup * std::exp(-(coeffs.bounds().sigma_a_hi + coeffs.bounds().sigma_s_hi +
                               g_sup * coeffs.bounds().sigma_b_hi) *
                             grid.diameter()) -
            1e-8;
        const bool in_range = res.u.min() > 0.0 && res.u.max() <= g_sup + 1e-12;
        const bool above_floor = res.u_avg.min() >= floor;
        c.pass = in_range && above_floor && res.admissibility.smallness_ok;
        c.detail = "min " + std::to_string(res.u.min()) + ", max " + std::to_string(res.u.max()) +
                   ", floor " + std::to_string(floor);
      } catch (const std::exception& e) {
        c.detail = e.what();
      }
      checks.push_back(c);
    }
  }

  // data identity and CSV round trip
  {
    VerifyCheck c{"data_identity_and_csv_round_trip", false, ""};
    try {
      const SpatialGrid grid(cfg.Lx, cfg.Ly, 16, 16);
      PhantomSpec spec;
      spec.kind = PhantomSpec::Kind::gaussian_inclusions;
      spec.sigma_a_bg = 1.0;
      spec.sigma_a_amp = 0.3;
      spec.sigma_b_bg = 0.4;
      spec.sigma_s_bg = 0.0;
      spec.bumps = {GaussianBump{0.4, 0.6, 0.15}};
      const CoefficientSet coeffs =
          make_phantom(spec, grid, cfg.coefficients.kernel.build(cfg.n_v));
      const GeneralSource g = GeneralSource::constant(0.8);
      SemilinearConfig scfg = cfg.solver.semilinear();
      scfg.inner.ray_step = std::min(grid.dx(), grid.dy()) / 2.0;
      SemilinearResult res = solve_semilinear(coeffs, g, scfg);
      InternalDatum datum = synthesize(coeffs, res.u_avg, {"verify"});
      double identity_err = 0.0;
      for (std::size_t i = 0; i < datum.H.size(); ++i) {
        const double expect = coeffs.sigma_a()[i] * res.u_avg[i] +
                              coeffs.sigma_b()[i] * res.u_avg[i] * res.u_avg[i];
        identity_err = std::max(identity_err, std::abs(datum.H[i] - expect));
      }
      write_scalar_csv(out / "verify_H.csv", datum.H);
      const ScalarField back = read_scalar_csv(out / "verify_H.csv");
      const double rt = sup_diff(back, datum.H);
      c.pass = identity_err == 0.0 && rt == 0.0;
      c.detail = "identity " + std::to_string(identity_err) + ", round trip " + std::to_string(rt);
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(c);
  }

  // two-start uniqueness of the outer fixed point
  {
    VerifyCheck c{"two_start_agreement", false, ""};
    try {
      const SpatialGrid grid(cfg.Lx, cfg.Ly, 24, 24);
      PhantomSpec spec;
      spec.sigma_a_bg = 1.0;
      spec.sigma_b_bg = 0.5;
      spec.sigma_s_bg = 1.0;
      const CoefficientSet coeffs = make_phantom(spec, grid, ScatteringKernel::isotropic(cfg.n_v));
      const GeneralSource g = GeneralSource::constant(1.0);
      SemilinearConfig scfg = cfg.solver.semilinear();
      scfg.inner.ray_step = std::min(grid.dx(), grid.dy()) / 2.0;
      SemilinearResult lo = solve_semilinear(coeffs, g, scfg, ScalarField(grid, 0.0));
      SemilinearResult hi = solve_semilinear(coeffs, g, scfg, ScalarField(grid, g.sup()));
      const double gap = sup_diff(lo.u_avg, hi.u_avg);
      c.pass = gap <= 2.0 * scfg.tol_fixed_point;
      c.detail = "two-start gap " + std::to_string(gap);
      write_scalar_csv(out / "verify_u_avg.csv", lo.u_avg);
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(c);
  }

  bool all = true;
  rep["verify"]["checks"] = json::array();
  for (const VerifyCheck& c : checks) {
    json cj;
    cj["name"] = c.name;
    cj["pass"] = c.pass;
    cj["detail"] = c.detail;
    rep["verify"]["checks"].push_back(cj);
    all = all && c.pass;
  }
  rep["verify"]["all_pass"] = all;
  rep["timings_ms"]["verify"] = watch.ms();
  if (!all) throw std::runtime_error("verify: one or more checks failed");
}

// ---------------------------------------------------------------------------

inline void dispatch(const std::string& subcommand, const ExperimentConfig& cfg,
                     const std::filesystem::path& out, json& rep) {
  if (subcommand == "forward") run_forward(cfg, out, rep);
  else if (subcommand == "synth") run_synth(cfg, out, rep);
  else if (subcommand == "recon-free") run_recon_free(cfg, out, rep);
  else if (subcommand == "recon-scatter") run_recon_scatter(cfg, out, rep);
  else if (subcommand == "certify-isotropic") run_certify(cfg, out, rep);
  else if (subcommand == "verify") run_verify(cfg, out, rep);
  else throw ConfigError("unknown subcommand: " + subcommand);
}

}  // namespace exp
}  // namespace tprt

#endif  // TPRT_EXPERIMENT_HPP_
