#include "crl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "crl/estimators.hpp"
#include "crl/synth.hpp"

namespace crl {

using nlohmann::json;

namespace {

std::string describe(const Error& e) {
  std::string s = e.stage().empty() ? std::string() : e.stage() + ": ";
  return s + std::string(to_string(e.kind()));
}

// Shortest round-trippable representation keeps CSV output byte-stable.
std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_ms(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::optional<RateFit> try_fit(const std::vector<double>& ns, const std::vector<double>& errs) {
  if (ns.size() < 3) return std::nullopt;
  try {
    return fit_rate(ns, errs);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

double q_perturbation(const CovarianceSet& estimated, const CovarianceSet& population) {
  const int K = population.num_environments;
  if (estimated.num_environments != K || estimated.observed_dim != population.observed_dim) {
    throw Error(ErrorKind::InvalidInput, "covariance sets are not comparable");
  }
  double worst = 0.0;
  for (EnvMask T = 1; T < (EnvMask{1} << K); ++T) {
    const auto a = linalg::sym_eig(q_matrix(T, estimated));
    const auto b = linalg::sym_eig(q_matrix(T, population));
    worst = std::max(worst, (a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff());
  }
  return worst;
}

CovarianceSet streamed_covariances(const GroundTruth& truth, Index n, std::uint64_t seed,
                                   NoiseDistribution noise, const EstimatorConfig& est) {
  const int K = truth.design.num_environments();
  std::map<EnvKey, MatrixXd> covs;
  for (int k = 0; k <= K; ++k) {
    for (int ell = 1; ell <= 2; ++ell) {
      SeededRng rng(seed, "samples",
                    {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(ell)});
      const MatrixXd x = simulate_environment(truth, k, ell, n, rng, noise);
      covs.emplace(EnvKey{k, ell}, second_moment(x, est.center));
    }
  }
  return CovarianceSet::from_covariances(truth.observed_dim(), K, std::move(covs),
                                         est.thresholds.rank_rel_tol);
}

SweepRow run_replicate(const ExperimentConfig& cfg, Index n, int replicate) {
  SweepRow row;
  row.n = n;
  row.replicate = replicate;
  const auto key = {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(replicate)};
  row.seed = SeededRng::derive(cfg.sweep.seed, "instance", key);
  const std::uint64_t sample_seed = SeededRng::derive(cfg.sweep.seed, "sample-draw", key);

  const auto start = std::chrono::steady_clock::now();
  try {
    const GroundTruth truth = generate_ground_truth(cfg.generation, row.seed);
    const CovarianceSet covs =
        streamed_covariances(truth, n, sample_seed, cfg.generation.noise, cfg.estimation);
    const CovarianceSet population =
        exact_covariances(truth, cfg.estimation.thresholds.rank_rel_tol);
    row.q_perturbation = q_perturbation(covs, population);

    const EstimationResult result = run_pipeline(covs, cfg.estimation);
    const EvaluationReport report = evaluate(result, truth);
    row.targets_exact = report.targets_exact;
    row.decoder_error = report.decoder_error;
    row.graph_exact = report.graph_exact;
    row.graph_shd = report.graph_shd;
    row.pencil_eig_error = report.pencil_eigenvalue_error;
  } catch (const Error& e) {
    row.error = describe(e);
    row.decoder_error = row.pencil_eig_error = std::numeric_limits<double>::quiet_NaN();
  }
  row.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return row;
}

SweepResult run_sweep(const ExperimentConfig& cfg, int workers) {
  std::vector<Index> grid = cfg.sweep.n_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  struct Job {
    Index n;
    int rep;
  };
  std::vector<Job> jobs;
  for (Index n : grid) {
    for (int r = 0; r < cfg.sweep.replicates; ++r) jobs.push_back({n, r});
  }

  SweepResult out;
  out.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out.rows[i] = run_replicate(cfg, jobs[i].n, jobs[i].rep);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<double> ns, dec, q, pen;
  for (Index n : grid) {
    SweepPoint pt;
    pt.n = n;
    int ok = 0;
    for (const auto& row : out.rows) {
      if (row.n != n) continue;
      ++pt.replicates;
      if (!row.error.empty()) {
        ++pt.failures;
        continue;
      }
      ++ok;
      pt.targets_exact_rate += row.targets_exact;
      pt.graph_exact_rate += row.graph_exact;
      pt.mean_decoder_error += row.decoder_error;
      pt.mean_graph_shd += row.graph_shd;
      pt.mean_pencil_eig_error += row.pencil_eig_error;
      pt.mean_q_perturbation += row.q_perturbation;
    }
    pt.targets_exact_rate /= pt.replicates;
    pt.graph_exact_rate /= pt.replicates;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double* m : {&pt.mean_decoder_error, &pt.mean_graph_shd, &pt.mean_pencil_eig_error,
                      &pt.mean_q_perturbation}) {
      *m = ok > 0 ? *m / ok : nan;
    }
    out.points.push_back(pt);
    ns.push_back(static_cast<double>(n));
    dec.push_back(pt.mean_decoder_error);
    q.push_back(pt.mean_q_perturbation);
    pen.push_back(pt.mean_pencil_eig_error);
  }
  out.decoder_fit = try_fit(ns, dec);
  out.q_fit = try_fit(ns, q);
  out.pencil_fit = try_fit(ns, pen);
  return out;
}

std::string sweep_csv(const SweepResult& result, bool include_timing) {
  std::ostringstream os;
  os << "n,replicate,seed,targets_exact,decoder_error,graph_exact,graph_shd,pencil_eig_error,"
        "q_perturbation,runtime_ms,error\n";
  for (const auto& r : result.rows) {
    os << r.n << ',' << r.replicate << ',' << r.seed << ',' << int(r.targets_exact) << ','
       << fmt(r.decoder_error) << ',' << int(r.graph_exact) << ',' << r.graph_shd << ','
       << fmt(r.pencil_eig_error) << ',' << fmt(r.q_perturbation) << ','
       << (include_timing ? fmt_ms(r.runtime_ms) : std::string()) << ',' << r.error << '\n';
  }
  return os.str();
}

json sweep_summary_json(const SweepResult& result) {
  json points = json::array();
  for (const auto& p : result.points) {
    points.push_back({{"n", p.n},
                      {"replicates", p.replicates},
                      {"failures", p.failures},
                      {"targets_exact_rate", p.targets_exact_rate},
                      {"graph_exact_rate", p.graph_exact_rate},
                      {"mean_decoder_error", finite_or_null(p.mean_decoder_error)},
                      {"mean_graph_shd", finite_or_null(p.mean_graph_shd)},
                      {"mean_pencil_eig_error", finite_or_null(p.mean_pencil_eig_error)},
                      {"mean_q_perturbation", finite_or_null(p.mean_q_perturbation)}});
  }
  auto fit = [](const std::optional<RateFit>& f) {
    return f ? json{{"slope", f->slope}, {"intercept", f->intercept}} : json(nullptr);
  };
  return {{"points", points},
          {"rate_fits",
           {{"decoder_error", fit(result.decoder_fit)},
            {"q_perturbation", fit(result.q_fit)},
            {"pencil_eig_error", fit(result.pencil_fit)}}}};
}

OracleCase check_population(const GroundTruth& truth, const EstimatorConfig& est) {
  OracleCase c;
  c.latent_dim = static_cast<int>(truth.latent_dim());
  c.observed_dim = static_cast<int>(truth.observed_dim());
  try {
    const CovarianceSet covs = exact_covariances(truth, est.thresholds.rank_rel_tol);
    const EstimationResult result = run_pipeline(covs, est);
    c.pencil_collision = result.diagnostics.pencil_collision;
    const EvaluationReport report = evaluate(result, truth);
    c.targets_ok = report.targets_exact;
    c.max_angle = report.max_angle_error;
    c.decoder_ok = c.max_angle < kOracleAngleTol;
    c.graph_shd = report.graph_shd;
    c.graph_ok = report.graph_exact;
    c.eigenvalue_error = report.pencil_eigenvalue_error;
    c.eigenvalues_ok = c.eigenvalue_error < kOracleEigenTol;
  } catch (const Error& e) {
    c.error = describe(e);
  }
  return c;
}

GroundTruth inject(const GroundTruth& truth, Injection injection) {
  switch (injection) {
    case Injection::None:
      return truth;
    case Injection::EqualRatios: {
      // Same scales in both settings: every ratio is 1.
      const auto& s = truth.sem.noise_scales(1);
      return GroundTruth(SemParameters(truth.sem.weights(), s, s), truth.decoder, truth.design);
    }
    case Injection::DuplicatePattern: {
      // Node 1 copies node 0's intervention pattern.
      std::vector<NodeSet> targets = truth.design.targets();
      for (auto& t : targets) {
        std::erase(t, 1);
        if (std::find(t.begin(), t.end(), 0) != t.end()) t.push_back(1);
        std::sort(t.begin(), t.end());
      }
      auto design = InterventionDesign::unchecked(truth.design.dim(), std::move(targets));
      return GroundTruth(truth.sem, truth.decoder, std::move(design));
    }
  }
  return truth;
}

bool OracleReport::all_pass() const {
  return !cases.empty() && passed() == static_cast<int>(cases.size());
}

int OracleReport::passed() const {
  return static_cast<int>(std::count_if(cases.begin(), cases.end(), [](const auto& c) { return c.pass(); }));
}

OracleReport run_oracle_suite(const ExperimentConfig& cfg, Injection injection) {
  OracleReport report;
  const auto& oc = cfg.oracle;
  for (int i = 0; i < oc.instances; ++i) {
    GenConfig g = cfg.generation;
    g.latent_dim = oc.latent_dims[static_cast<std::size_t>(i) % oc.latent_dims.size()];
    g.observed_dim = oc.observed_factor * g.latent_dim;
    g.num_environments = 0;
    g.decoder.reset();
    g.noise = i % 2 == 0 ? NoiseDistribution::Gaussian : NoiseDistribution::Uniform;
    const std::uint64_t seed =
        SeededRng::derive(oc.seed, "oracle-instance", {static_cast<std::uint64_t>(i)});
    OracleCase c;
    try {
      c = check_population(inject(generate_ground_truth(g, seed), injection), cfg.estimation);
    } catch (const Error& e) {
      c.error = describe(e);
    }
    c.index = i;
    c.latent_dim = g.latent_dim;
    c.observed_dim = g.observed_dim;
    c.noise = g.noise;
    c.seed = seed;
    report.cases.push_back(c);
  }
  return report;
}

json oracle_report_json(const OracleReport& report) {
  json cases = json::array();
  for (const auto& c : report.cases) {
    cases.push_back({{"index", c.index},
                     {"d", c.latent_dim},
                     {"p", c.observed_dim},
                     {"noise", to_string(c.noise)},
                     {"seed", c.seed},
                     {"pass", c.pass()},
                     {"targets_ok", c.targets_ok},
                     {"decoder_ok", c.decoder_ok},
                     {"graph_ok", c.graph_ok},
                     {"eigenvalues_ok", c.eigenvalues_ok},
                     {"max_angle", c.max_angle},
                     {"eigenvalue_error", c.eigenvalue_error},
                     {"graph_shd", c.graph_shd},
                     {"pencil_collision", c.pencil_collision},
                     {"error", c.error}});
  }
  return {{"passed", report.passed()}, {"total", report.cases.size()}, {"cases", cases}};
}

}  // namespace crl
