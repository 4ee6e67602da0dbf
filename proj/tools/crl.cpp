// crl: generate data, estimate, evaluate, sweep, oracle.
//
// Exit codes: 0 success, 1 usage or IO problem, 2 estimation-stage failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "crl/config.hpp"
#include "crl/estimators.hpp"
#include "crl/harness.hpp"
#include "crl/io.hpp"
#include "crl/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Verbosity { Quiet, Info, Debug };

Verbosity verbosity() {
  const char* v = std::getenv("CRL_LOG");
  if (!v) return Verbosity::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0" || s == "error") return Verbosity::Quiet;
  if (s == "debug" || s == "2") return Verbosity::Debug;
  return Verbosity::Info;
}

void log_info(const std::string& msg) {
  if (verbosity() >= Verbosity::Info) std::cerr << "crl: " << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (verbosity() >= Verbosity::Debug) std::cerr << "crl[debug]: " << msg << '\n';
}

// Flags that override config keys. Unset flags leave the config alone.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool center = false;
  std::optional<double> rho;
  std::string alpha;
  std::optional<double> rank_tol;

  crl::ExperimentConfig load() const {
    crl::ExperimentConfig cfg =
        config.empty() ? crl::ExperimentConfig{} : crl::ExperimentConfig::load(config);
    auto& t = cfg.estimation.thresholds;
    if (center) cfg.estimation.center = true;
    if (rho) t.rho = *rho;
    if (rank_tol) t.rank_rel_tol = *rank_tol;
    if (!alpha.empty()) {
      if (alpha == "auto") {
        t.alpha_mode = crl::AlphaMode::Auto;
      } else {
        try {
          std::size_t used = 0;
          t.alpha = std::stod(alpha, &used);
          if (used != alpha.size()) throw std::invalid_argument(alpha);
        } catch (const std::exception&) {
          throw crl::Error(crl::ErrorKind::InvalidInput, "--alpha must be a number or 'auto'");
        }
        t.alpha_mode = crl::AlphaMode::Fixed;
      }
    }
    t.validate();
    if (workers) cfg.sweep.workers = *workers;
    return cfg;
  }
};

void add_config_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)");
}

void add_estimation_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_flag("--center", o.center, "center samples before forming second moments");
  cmd->add_option("--rho", o.rho, "eigen-count threshold in (0,1]");
  cmd->add_option("--alpha", o.alpha, "graph threshold, or 'auto'");
  cmd->add_option("--rank-tol", o.rank_tol, "relative rank tolerance");
}

std::string summary_line(const crl::EvaluationReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "targets %s, decoder_error %.3e, max_angle %.3e, graph %s (shd %d), "
                "pencil_eig_error %.3e",
                r.targets_exact ? "exact" : "wrong", r.decoder_error, r.max_angle_error,
                r.graph_exact ? "exact" : "wrong", r.graph_shd, r.pencil_eigenvalue_error);
  return buf;
}

// Errors carrying a pipeline stage are estimation failures; the rest are
// input problems.
int exit_code(const crl::Error& e) { return e.stage().empty() ? 1 : 2; }

int cmd_generate(const Overrides& o, const std::string& out, std::optional<crl::Index> n) {
  crl::ExperimentConfig cfg = o.load();
  auto& g = cfg.generation;
  if (o.seed) g.seed = *o.seed;
  if (n) cfg.samples_per_env = *n;
  if (g.num_environments == 0) g.num_environments = crl::auto_num_environments(g.latent_dim);
  log_debug("d=" + std::to_string(g.latent_dim) + " p=" + std::to_string(g.observed_dim) +
            " K=" + std::to_string(g.num_environments));

  const crl::GroundTruth truth = crl::generate_ground_truth(g);
  const crl::EnvironmentDataset data =
      crl::simulate_dataset(truth, cfg.samples_per_env, g.seed, g.noise);

  const fs::path dir(out);
  fs::create_directories(dir);
  crl::io::write_ground_truth(truth, dir / "truth.json");
  json generation = cfg.to_json()["generation"];
  generation["K"] = g.num_environments;
  crl::io::write_dataset(data, dir, "truth.json", generation);

  const auto a = crl::validate_assumptions(truth, g.ratio_gap);
  std::printf("d=%d p=%d K=%d n=%lld per (k,l)\n", g.latent_dim, g.observed_dim,
              g.num_environments, static_cast<long long>(cfg.samples_per_env));
  std::printf("A1 strong separation: %s\n", a.a1_pass ? "pass" : "FAIL");
  std::printf("A2 ratio gap: %s (margin %.4g, required %.4g)\n", a.a2_pass ? "pass" : "FAIL",
              a.a2_margin, g.ratio_gap);
  std::printf("1-rho*: %.6g  condition: %.6g\n", a.one_minus_rho_star, a.condition);
  std::printf("%s\n", (dir / crl::io::kManifestName).string().c_str());
  return 0;
}

int cmd_estimate(const Overrides& o, const std::string& dataset, const std::string& out,
                 bool population) {
  const crl::ExperimentConfig cfg = o.load();
  const fs::path dir(dataset);
  auto loaded = crl::io::read_dataset(dir);

  std::optional<crl::GroundTruth> truth;
  if (loaded.manifest.ground_truth) {
    const fs::path truth_path = dir / *loaded.manifest.ground_truth;
    if (fs::exists(truth_path)) truth = crl::io::read_ground_truth(truth_path);
  }

  crl::EstimationResult result;
  if (population) {
    if (!truth) {
      throw crl::Error(crl::ErrorKind::InvalidInput, "--population needs ground truth in the dataset");
    }
    log_info("estimating from population covariances");
    result = crl::run_pipeline(
        crl::exact_covariances(*truth, cfg.estimation.thresholds.rank_rel_tol), cfg.estimation);
  } else {
    log_info("estimating from " + std::to_string(loaded.data.samples.size()) + " sample matrices");
    result = crl::run_pipeline(loaded.data, cfg.estimation);
  }

  std::optional<crl::EvaluationReport> report;
  if (truth) {
    try {
      report = crl::evaluate(result, *truth);
      std::printf("%s\n", summary_line(*report).c_str());
    } catch (const crl::Error& e) {
      log_info(std::string("evaluation skipped: ") + e.what());
    }
  }
  const fs::path out_path = out.empty() ? dir / "results.json" : fs::path(out);
  crl::io::write_results(result, report ? &*report : nullptr, out_path);
  std::printf("%s\n", out_path.string().c_str());
  return 0;
}

int cmd_evaluate(const std::string& results, const std::string& truth_path,
                 const std::string& out) {
  const auto result = crl::io::read_results(results);
  const auto truth = crl::io::read_ground_truth(truth_path);
  crl::EvaluationReport report;
  try {
    report = crl::evaluate(result, truth);
  } catch (const crl::Error& e) {
    throw e.with_stage("evaluate");
  }
  const std::string text = crl::io::report_to_json(report).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    crl::io::write_text(out, text);
  }
  std::printf("%s\n", summary_line(report).c_str());
  return 0;
}

int cmd_sweep(const Overrides& o, const std::string& out, bool timing) {
  crl::ExperimentConfig cfg = o.load();
  if (o.seed) cfg.sweep.seed = *o.seed;
  const fs::path dir(out.empty() ? cfg.output_dir : out);
  fs::create_directories(dir);
  log_info("sweep: " + std::to_string(cfg.sweep.n_grid.size()) + " sizes x " +
           std::to_string(cfg.sweep.replicates) + " replicates on " +
           std::to_string(cfg.sweep.workers) + " workers");
  const auto result = crl::run_sweep(cfg, cfg.sweep.workers);
  for (const auto& row : result.rows) {
    if (!row.error.empty()) {
      log_info("n=" + std::to_string(row.n) + " rep " + std::to_string(row.replicate) +
               " failed: " + row.error);
    }
  }
  crl::io::write_text(dir / "sweep.csv", crl::sweep_csv(result, timing));
  crl::io::write_text(dir / "sweep_summary.json", crl::sweep_summary_json(result).dump(2) + "\n");
  std::printf("%s\n", (dir / "sweep.csv").string().c_str());
  return 0;
}

int cmd_oracle(const Overrides& o, const std::string& inject, const std::string& out) {
  crl::ExperimentConfig cfg = o.load();
  if (o.seed) cfg.oracle.seed = *o.seed;
  crl::Injection injection = crl::Injection::None;
  if (inject == "equal-ratios") {
    injection = crl::Injection::EqualRatios;
  } else if (inject == "duplicate-pattern") {
    injection = crl::Injection::DuplicatePattern;
  } else if (inject != "none") {
    throw crl::Error(crl::ErrorKind::InvalidInput, "unknown --inject value '" + inject + "'");
  }
  const auto report = crl::run_oracle_suite(cfg, injection);
  for (const auto& c : report.cases) {
    std::printf("instance %2d d=%d p=%d %-8s %s", c.index, c.latent_dim, c.observed_dim,
                crl::to_string(c.noise).c_str(), c.pass() ? "pass" : "FAIL");
    if (!c.error.empty()) {
      std::printf("  error: %s", c.error.c_str());
    } else if (!c.pass()) {
      std::printf("  targets=%d decoder=%d (angle %.2e) graph=%d (shd %d) eigs=%d (%.2e)",
                  c.targets_ok, c.decoder_ok, c.max_angle, c.graph_ok, c.graph_shd,
                  c.eigenvalues_ok, c.eigenvalue_error);
    }
    if (c.pencil_collision) std::printf("  pencil eigenvalue collision");
    std::printf("\n");
  }
  std::printf("%d/%zu instances passed\n", report.passed(), report.cases.size());
  if (!out.empty()) crl::io::write_text(out, crl::oracle_report_json(report).dump(2) + "\n");
  return report.all_pass() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal representation learning from multi-environment covariances"};
  app.require_subcommand(1);

  Overrides o;
  std::string out;

  auto* gen = app.add_subcommand("generate", "synthesize an instance and write a dataset");
  add_config_flags(gen, o);
  gen->add_option("--out", out, "dataset directory")->required();
  gen->add_option("--seed", o.seed, "generation seed");
  std::optional<crl::Index> n;
  gen->add_option("--n", n, "samples per (k, l)");

  auto* est = app.add_subcommand("estimate", "run the estimator on a dataset");
  std::string dataset;
  est->add_option("dataset", dataset, "dataset directory")->required();
  add_config_flags(est, o);
  add_estimation_flags(est, o);
  est->add_option("--out", out, "results JSON (default: <dataset>/results.json)");
  bool population = false;
  est->add_flag("--population", population, "use exact covariances from the ground truth");

  auto* ev = app.add_subcommand("evaluate", "compare a result against ground truth");
  std::string results, truth;
  ev->add_option("results", results, "results JSON")->required();
  ev->add_option("truth", truth, "ground-truth JSON")->required();
  ev->add_option("--out", out, "report JSON (default: stdout)");

  auto* sw = app.add_subcommand("sweep", "Monte Carlo sweep over sample sizes");
  add_config_flags(sw, o);
  add_estimation_flags(sw, o);
  sw->add_option("--out", out, "output directory (default: config output.dir)");
  sw->add_option("--seed", o.seed, "sweep seed");
  sw->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  bool no_timing = false;
  sw->add_flag("--no-timing", no_timing, "leave runtime_ms empty");

  auto* orc = app.add_subcommand("oracle", "population-oracle identifiability suite");
  add_config_flags(orc, o);
  add_estimation_flags(orc, o);
  orc->add_option("--seed", o.seed, "oracle seed");
  std::string inject = "none";
  orc->add_option("--inject", inject, "none | equal-ratios | duplicate-pattern");
  orc->add_option("--out", out, "report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_generate(o, out, n);
    if (*est) return cmd_estimate(o, dataset, out, population);
    if (*ev) return cmd_evaluate(results, truth, out);
    if (*sw) return cmd_sweep(o, out, !no_timing);
    if (*orc) return cmd_oracle(o, inject, out);
  } catch (const crl::Error& e) {
    std::cerr << "crl: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "crl: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
