//! \file main.cpp
//  \brief Command-line experiment driver: forward solves, data synthesis, the
//         two reconstruction pipelines, the isotropic certificate, and the
//         built-in verification suite.
//
//  Exit codes: 0 success, 2 config/schema error, 3 convergence failure,
//  4 data inconsistency, 1 anything else. A run report JSON is written even
//  on failure paths.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fcntl.h>
#include <filesystem>
#include <string>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "tprt/config.hpp"
#include "tprt/experiment.hpp"
#include "tprt/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// One run per output directory: the lock is created O_EXCL and removed on
// scope exit. A stale lock (crashed run) must be deleted by hand.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".tprt.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw tprt::ConfigError("output directory is locked by another run (or stale lock): " +
                              path_.string());
    ::close(fd);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const tprt::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const tprt::ConvergenceError*>(&e)) return 3;
  if (dynamic_cast<const tprt::DataInconsistencyError*>(&e)) return 4;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semilinear radiative transport: forward solves and coefficient reconstruction"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_override;
  int threads = 0;
  bool verbose = false;

  const std::vector<std::string> names = {"forward",       "synth",
                                          "recon-free",    "recon-scatter",
                                          "certify-isotropic", "verify"};
  const std::vector<std::string> descriptions = {
      "solve the forward problem and write the density field",
      "synthesize internal data on a refined grid",
      "explicit non-scattering reconstruction from two data sets",
      "fixed-point reconstruction with known scattering",
      "compute the isotropic uniqueness/stability certificate",
      "run the built-in verification suite"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    CLI::App* sub = app.add_subcommand(names[i], descriptions[i]);
    sub->add_option("--config", config_path, "experiment configuration (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--output", output_override, "output directory (overrides config)");
    sub->add_option("--threads", threads, "worker thread count (default: hardware)");
    sub->add_flag("--verbose", verbose, "print progress to stderr");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();

  // Environment overrides the flag, which overrides the hardware default.
  if (threads > 0) tprt::set_thread_count(threads);
  if (const char* env = std::getenv("TPRT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) tprt::set_thread_count(n);
  }

  json report;
  report["subcommand"] = subcommand;
  report["status"] = "error";
  fs::path out_dir = output_override;  // best-known destination for the report
  int code = 1;
  tprt::exp::Stopwatch total;

  try {
    tprt::ExperimentConfig cfg = tprt::load_config(config_path);
    if (!output_override.empty()) cfg.output = output_override;
    out_dir = cfg.output;
    fs::create_directories(out_dir);
    DirectoryLock lock(out_dir);
    report["config"] = cfg.raw;
    report["threads"] = tprt::thread_count();
    if (verbose)
      std::fprintf(stderr, "[tprt] %s -> %s (%d threads)\n", subcommand.c_str(),
                   out_dir.string().c_str(), tprt::thread_count());
    tprt::exp::dispatch(subcommand, cfg, out_dir, report);
    report["status"] = "ok";
    code = 0;
  } catch (const std::exception& e) {
    code = exit_code_for(e);
    report["error"] = e.what();
    report["exit_code"] = code;
    std::fprintf(stderr, "error: %s\n", e.what());
  }
  report["timings_ms"]["total"] = total.ms();

  if (!out_dir.empty()) {
    try {
      fs::create_directories(out_dir);
      tprt::atomic_write_text(out_dir / "report.json", report.dump(2) + "\n");
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error writing report: %s\n", e.what());
      if (code == 0) code = 1;
    }
  }
  return code;
}
