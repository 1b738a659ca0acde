#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "tprt/csv_io.hpp"
#include "tprt/fields.hpp"
#include "tprt/rng.hpp"
#include "tprt/source.hpp"
#include "tprt/transport_linear.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tprt;

namespace {

std::string cli_path() {
  const char* env = std::getenv("TPRT_CLI");
  if (!env) throw std::runtime_error("TPRT_CLI not set; run through ctest");
  return env;
}

int run_cli(const std::string& subcommand, const fs::path& config, const fs::path& out) {
  const std::string cmd = cli_path() + " " + subcommand + " --config " + config.string() +
                          " --output " + out.string() + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path unique_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("tprt_test_" + tag + "_" +
                                                    std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2);
}

json base_config() {
  json j;
  j["grid"] = {{"Lx", 1.0}, {"Ly", 1.0}, {"nx", 16}, {"ny", 16}, {"n_v", 8}};
  j["coefficients"] = {
      {"phantom",
       {{"name", "constant"}, {"sigma_a", 1.0}, {"sigma_b", 0.0}, {"sigma_s", 0.5}}},
      {"kernel", {{"type", "isotropic"}}}};
  j["source"] = {{"type", "general"}, {"value", 1.0}};
  j["solver"] = {{"ray_step", 1.0 / 32}, {"tol_source", 1e-11}};
  j["task"] = json::object();
  j["seed"] = 4242;
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, ForwardMatchesLinearReference) {
  const fs::path dir = unique_dir("forward");
  const fs::path cfg = dir / "config.json";
  write_json(cfg, base_config());
  ASSERT_EQ(run_cli("forward", cfg, dir / "out"), 0);

  const ScalarField u_avg = read_scalar_csv(dir / "out" / "u_avg.csv");
  // independent reference: sigma_b == 0 makes the problem linear
  SpatialGrid grid(1.0, 1.0, 16, 16);
  AngularGrid angles(8);
  ScalarField sigma_a(grid, 1.0);
  ScalarField sigma_s(grid, 0.5);
  LinearSolveConfig lcfg;
  lcfg.ray_step = 1.0 / 32;
  lcfg.tol_source = 1e-11;
  const ScalarField ref = angular_average(
      solve_linear(sigma_a, sigma_s, ScatteringKernel::isotropic(8),
                   GeneralSource::constant(1.0), angles, lcfg)
          .u);
  EXPECT_LT(sup_diff(u_avg, ref), 1e-8);

  const json report = json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_EQ(report.at("status"), "ok");
  fs::remove_all(dir);
}

TEST(Cli, MalformedConfigExitsTwoWithoutArtifacts) {
  const fs::path dir = unique_dir("badcfg");
  const fs::path cfg = dir / "config.json";
  json j = base_config();
  j["grid"]["nx"] = -4;
  write_json(cfg, j);
  ASSERT_EQ(run_cli("forward", cfg, dir / "out"), 2);
  EXPECT_FALSE(fs::exists(dir / "out" / "u_avg.csv"));
  // the run report is still emitted, with the failure recorded
  const json report = json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_EQ(report.at("status"), "error");
  EXPECT_EQ(report.at("exit_code"), 2);
  fs::remove_all(dir);
}

TEST(Cli, UnknownKeyIsRejected) {
  const fs::path dir = unique_dir("unknownkey");
  const fs::path cfg = dir / "config.json";
  json j = base_config();
  j["grid"]["typo_key"] = 3;
  write_json(cfg, j);
  ASSERT_EQ(run_cli("forward", cfg, dir / "out"), 2);
  fs::remove_all(dir);
}

TEST(Cli, SynthWritesDatumAndProvenance) {
  const fs::path dir = unique_dir("synth");
  const fs::path cfg = dir / "config.json";
  json j = base_config();
  j["coefficients"]["phantom"]["sigma_b"] = 0.4;
  j["task"] = {{"refinement", 2}, {"noise", 0.01}, {"source_id", "H1"}};
  write_json(cfg, j);
  ASSERT_EQ(run_cli("synth", cfg, dir / "out"), 0);
  const ScalarField H = read_scalar_csv(dir / "out" / "H1.csv");
  EXPECT_GT(H.min(), 0.0);
  const json prov = json::parse(slurp(dir / "out" / "H1_provenance.json"));
  EXPECT_EQ(prov.at("source_id"), "H1");
  EXPECT_EQ(prov.at("refinement"), 2);
  EXPECT_DOUBLE_EQ(prov.at("noise_level").get<double>(), 0.01);
  fs::remove_all(dir);
}

TEST(Cli, ReconFreeCollimatedEndToEnd) {
  const fs::path dir = unique_dir("reconfree");
  const fs::path cfg = dir / "config.json";
  json j = base_config();
  j["grid"] = {{"Lx", 1.0}, {"Ly", 1.0}, {"nx", 32}, {"ny", 32}, {"n_v", 4}};
  j["coefficients"]["phantom"] = {{"name", "gaussian-inclusions"},
                                  {"sigma_a", 1.0},
                                  {"sigma_b", 0.4},
                                  {"sigma_s", 0.0},
                                  {"sigma_a_amplitude", 0.3},
                                  {"bumps", json::array({{{"cx", 0.5}, {"cy", 0.5}, {"width", 0.18}}})}};
  j["source"] = {{"type", "collimated"}, {"strength", 1.0}, {"direction", {1.0, 0.0}}};
  j["solver"]["ray_step"] = 1.0 / 64;
  j["task"] = {{"strength2", 0.6}};
  write_json(cfg, j);
  ASSERT_EQ(run_cli("recon-free", cfg, dir / "out"), 0);
  const json report = json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_EQ(report.at("status"), "ok");
  const double rel_a = report.at("recon").at("error_vs_truth").at("rel_sup_sigma_a");
  const double rel_b = report.at("recon").at("error_vs_truth").at("rel_sup_sigma_b");
  EXPECT_LT(rel_a, 0.10);
  EXPECT_LT(rel_b, 0.15);
  EXPECT_TRUE(fs::exists(dir / "out" / "sigma_a_rec.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "sigma_b_rec.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "conditioning.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "mask.csv"));
  fs::remove_all(dir);
}

TEST(Cli, ReconFreeConsumesSynthesizedFiles) {
  const fs::path dir = unique_dir("synth_chain");
  json j = base_config();
  j["grid"] = {{"Lx", 1.0}, {"Ly", 1.0}, {"nx", 24}, {"ny", 24}, {"n_v", 4}};
  j["coefficients"]["phantom"]["sigma_b"] = 0.4;
  j["coefficients"]["phantom"]["sigma_s"] = 0.0;
  j["source"] = {{"type", "collimated"}, {"strength", 1.0}, {"direction", {1.0, 0.0}}};
  j["solver"]["ray_step"] = 1.0 / 48;

  j["task"] = {{"source_id", "H1"}};
  write_json(dir / "c1.json", j);
  ASSERT_EQ(run_cli("synth", dir / "c1.json", dir / "d1"), 0);
  j["source"]["strength"] = 0.6;
  j["task"] = {{"source_id", "H2"}};
  write_json(dir / "c2.json", j);
  ASSERT_EQ(run_cli("synth", dir / "c2.json", dir / "d2"), 0);

  j["source"]["strength"] = 1.0;
  j["task"] = {{"strength2", 0.6},
               {"data", {{"H1", (dir / "d1" / "H1.csv").string()},
                         {"H2", (dir / "d2" / "H2.csv").string()}}}};
  write_json(dir / "c3.json", j);
  ASSERT_EQ(run_cli("recon-free", dir / "c3.json", dir / "rec"), 0);
  const json report = json::parse(slurp(dir / "rec" / "report.json"));
  EXPECT_LT(report.at("recon").at("error_vs_truth").at("rel_sup_sigma_a").get<double>(), 0.15);
  fs::remove_all(dir);
}

TEST(Cli, VerifyPassesAndIsDeterministic) {
  const fs::path dir = unique_dir("verify");
  const fs::path cfg = dir / "config.json";
  json j = base_config();
  j["task"] = {{"phantoms", 2}};
  write_json(cfg, j);
  ASSERT_EQ(run_cli("verify", cfg, dir / "a"), 0);
  ASSERT_EQ(run_cli("verify", cfg, dir / "b"), 0);
  EXPECT_EQ(slurp(dir / "a" / "verify_H.csv"), slurp(dir / "b" / "verify_H.csv"));
  EXPECT_EQ(slurp(dir / "a" / "verify_u_avg.csv"), slurp(dir / "b" / "verify_u_avg.csv"));
  const json report = json::parse(slurp(dir / "a" / "report.json"));
  EXPECT_TRUE(report.at("verify").at("all_pass").get<bool>());
  fs::remove_all(dir);
}

TEST(Cli, OutputDirectoryLock) {
  const fs::path dir = unique_dir("lock");
  const fs::path cfg = dir / "config.json";
  write_json(cfg, base_config());
  fs::create_directories(dir / "out");
  {
    std::ofstream lock(dir / "out" / ".tprt.lock");
    lock << "held";
  }
  ASSERT_EQ(run_cli("forward", cfg, dir / "out"), 2);
  fs::remove(dir / "out" / ".tprt.lock");
  ASSERT_EQ(run_cli("forward", cfg, dir / "out"), 0);
  // the lock is released after a successful run
  EXPECT_FALSE(fs::exists(dir / "out" / ".tprt.lock"));
  fs::remove_all(dir);
}

TEST(Cli, PhaseFieldCsvRoundTrip) {
  SpatialGrid grid(1.0, 0.5, 6, 4);
  AngularGrid angles(6);
  PhaseField u(grid, angles);
  Rng rng(5);
  for (std::size_t c = 0; c < u.size(); ++c) u[c] = rng.uniform(-2.0, 2.0);
  const fs::path dir = unique_dir("phase_csv");
  write_phase_csv(dir / "u.csv", u);
  const PhaseField back = read_phase_csv(dir / "u.csv");
  ASSERT_TRUE(back.grid().same_layout(grid));
  ASSERT_EQ(back.angles().size(), 6);
  EXPECT_DOUBLE_EQ(sup_diff(back, u), 0.0);
  fs::remove_all(dir);
}
