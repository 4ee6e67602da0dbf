// Acceptance checks. One line per criterion:
//
//   criterion N: PASS|FAIL  <measurements>
//
// Usage: acceptance [--criterion N] [--out DIR]
// Without --criterion every check runs. Artifacts (CSV / JSON) land in DIR,
// default ./acceptance_out.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "crl/estimators.hpp"
#include "crl/harness.hpp"
#include "crl/io.hpp"
#include "crl/synth.hpp"
#include "oracles.hpp"

using namespace crl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;   // deterministic part of the report line
  double seconds = 0.0;  // wall time, reported but never compared
  std::vector<std::pair<std::string, std::string>> artifacts;  // file name, bytes
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared finite-sample setting: d = 8, p = 50, K = 6, rho = 0.5.
ExperimentConfig finite_sample_config(std::uint64_t seed, int replicates) {
  ExperimentConfig cfg;
  cfg.generation.latent_dim = 8;
  cfg.generation.observed_dim = 50;
  cfg.generation.num_environments = 6;
  cfg.generation.a_min = 0.5;
  cfg.generation.a_max = 0.9;
  cfg.generation.max_in_degree = 2;
  cfg.estimation.thresholds.rho = 0.5;
  cfg.estimation.thresholds.alpha_mode = AlphaMode::Auto;
  cfg.sweep.n_grid = {4000, 16000, 64000};
  cfg.sweep.replicates = replicates;
  cfg.sweep.seed = seed;
  return cfg;
}

Outcome sweep_outcome(const SweepResult& r, const std::string& stem) {
  Outcome o;
  o.artifacts.push_back({stem + ".csv", sweep_csv(r, false)});
  o.artifacts.push_back({stem + "_summary.json", sweep_summary_json(r).dump(2) + "\n"});
  return o;
}

int inversions(const std::vector<double>& v) {
  int count = 0;
  for (std::size_t i = 1; i < v.size(); ++i) count += v[i] < v[i - 1];
  return count;
}

// 1. Population oracle over 25 instances.
Outcome criterion_1(int /*workers*/) {
  const auto t0 = Clock::now();
  const auto report = run_oracle_suite(ExperimentConfig{});
  const double secs = seconds_since(t0);
  double worst_angle = 0.0, worst_eig = 0.0;
  for (const auto& c : report.cases) {
    worst_angle = std::max(worst_angle, c.max_angle);
    worst_eig = std::max(worst_eig, c.eigenvalue_error);
  }
  Outcome o;
  o.pass = report.cases.size() == 25 && report.all_pass() && secs < 30.0;
  o.detail = fmt("%d/%zu instances exact, max angle %.2e, max eigenvalue error %.2e",
                 report.passed(), report.cases.size(), worst_angle, worst_eig);
  o.seconds = secs;
  auto j = oracle_report_json(report);
  o.artifacts.push_back({"criterion_1_oracle.json", j.dump(2) + "\n"});
  return o;
}

// 2. Unit-eigenspace rank of Q(T) versus set intersection of supports.
Outcome criterion_2(int /*workers*/) {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2);
  int mismatches = 0, checked = 0;
  json log = json::array();
  for (int pair = 0; pair < 200; ++pair) {
    const int d = 2 + static_cast<int>(gen() % 5);            // 2..6
    const int p = d + static_cast<int>(gen() % (13 - d));      // d..12
    const int K = 1 + static_cast<int>(gen() % 5);             // 1..5
    std::vector<NodeSet> targets(static_cast<std::size_t>(K));
    for (auto& t : targets)
      for (int j = 0; j < d; ++j)
        if (gen() % 2) t.push_back(j);
    auto design = InterventionDesign::unchecked(d, targets);

    GenConfig g;
    g.latent_dim = d;
    g.observed_dim = p;
    g.edge_prob = 0.5;
    SeededRng rng(static_cast<std::uint64_t>(pair), "criterion-2");
    const MatrixXd w = sample_weights(sample_dag(g, rng), g.a_min, g.a_max, rng);
    const auto scales = sample_noise_scales(d, g.scale_1, g.scale_2, 0.0, rng);
    const MatrixXd b = oracle::gaussian_matrix(p, d, static_cast<unsigned>(1000 + pair));
    const GroundTruth truth(SemParameters(w, scales[0], scales[1]), b, design);
    const auto covs = exact_covariances(truth);

    for (EnvMask T = 1; T < (EnvMask{1} << K); ++T) {
      const auto spectrum = linalg::unit_interval_spectrum(q_matrix(T, covs));
      const int unit = static_cast<int>((spectrum.eigenvalues.array() >= 1.0 - 1e-8).count());
      const int brute = static_cast<int>(oracle::supports_intersection(design, T).size());
      ++checked;
      if (unit != brute) {
        ++mismatches;
        log.push_back({{"pair", pair}, {"mask", T}, {"unit", unit}, {"brute", brute}});
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mismatches == 0 && secs < 10.0;
  o.detail = fmt("%d mismatches over %d (pair, T) checks", mismatches, checked);
  o.seconds = secs;
  o.artifacts.push_back({"criterion_2_mismatches.json",
                         json{{"checked", checked}, {"mismatches", log}}.dump(2) + "\n"});
  return o;
}

// Random antichain of subsets of [K]: the patterns of a strongly separating design.
std::vector<EnvMask> random_antichain(int K, int d, std::mt19937_64& gen) {
  std::vector<EnvMask> chosen;
  const EnvMask full = (EnvMask{1} << K) - 1;
  for (int attempt = 0; attempt < 20000 && static_cast<int>(chosen.size()) < d; ++attempt) {
    const EnvMask m = static_cast<EnvMask>(gen() & full);
    if (m == 0 || m == full) continue;
    bool ok = true;
    for (EnvMask c : chosen) ok = ok && (m & c) != m && (m & c) != c;
    if (ok) chosen.push_back(m);
  }
  return chosen;
}

// 3. Möbius reconstruction on exact dimensions.
Outcome criterion_3(int /*workers*/) {
  std::mt19937_64 gen(3);
  int mismatches = 0;
  json log = json::array();
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 2 + static_cast<int>(gen() % 7);  // 2..8
    const int want = 2 + static_cast<int>(gen() % 14);
    const auto patterns = random_antichain(K, want, gen);
    const int d = static_cast<int>(patterns.size());
    if (d < 2) {
      --trial;
      continue;
    }
    std::vector<NodeSet> targets(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k)
      for (int j = 0; j < d; ++j)
        if (!env_in(patterns[static_cast<std::size_t>(j)], k)) targets[static_cast<std::size_t>(k - 1)].push_back(j);
    const InterventionDesign design(d, targets);

    // Colex relabeling: estimated node m is the node with the m-th smallest pattern.
    std::vector<int> order(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) order[static_cast<std::size_t>(j)] = j;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return patterns[a] < patterns[b]; });
    std::vector<int> label(static_cast<std::size_t>(d));
    for (int m = 0; m < d; ++m) label[static_cast<std::size_t>(order[static_cast<std::size_t>(m)])] = m;
    std::vector<NodeSet> expected;
    for (const auto& t : design.targets()) {
      NodeSet r;
      for (int j : t) r.push_back(label[static_cast<std::size_t>(j)]);
      std::sort(r.begin(), r.end());
      expected.push_back(r);
    }

    // Exact g through the estimator's own path. Orthonormal decoder columns
    // keep every Q(T) spectrum exactly {0, 1}, so no threshold is involved.
    GenConfig g;
    g.latent_dim = d;
    g.observed_dim = d + 3;
    SeededRng rng(static_cast<std::uint64_t>(trial), "criterion-3");
    const auto scales = sample_noise_scales(d, g.scale_1, g.scale_2, 0.0, rng);
    const GroundTruth truth(SemParameters(MatrixXd::Zero(d, d), scales[0], scales[1]),
                            MatrixXd(oracle::gaussian_matrix(d + 3, d, static_cast<unsigned>(trial))
                                         .householderQr()
                                         .householderQ() *
                                     MatrixXd::Identity(d + 3, d)),
                            design);
    bool ok = true;
    try {
      const auto est = reconstruct_targets(exact_covariances(truth), 0.5);
      ok = est.targets == expected && est.table.counts == oracle::pattern_counts(design);
      // Brute-force dimension table through the same Möbius step.
      std::vector<int> dims(std::size_t{1} << K);
      dims[0] = d;
      for (EnvMask T = 1; T < dims.size(); ++T)
        dims[T] = static_cast<int>(oracle::supports_intersection(design, T).size());
      ok = ok && dims == est.table.dims &&
           oracle::mobius_direct(dims, K) == est.table.counts;
    } catch (const Error& e) {
      ok = false;
    }
    if (!ok) {
      ++mismatches;
      log.push_back({{"trial", trial}, {"K", K}, {"d", d}});
    }
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = fmt("%d mismatches over 100 random strongly separating designs (K <= 8)", mismatches);
  o.artifacts.push_back({"criterion_3_mismatches.json", log.dump(2) + "\n"});
  return o;
}

// 4. Target recovery at n = 4e4 per (k, l).
Outcome criterion_4(int workers) {
  auto cfg = finite_sample_config(4, 50);
  cfg.sweep.n_grid = {40000};
  const auto t0 = Clock::now();
  const auto r = run_sweep(cfg, workers);
  const double secs = seconds_since(t0);
  Outcome o = sweep_outcome(r, "criterion_4");
  const double rate = r.points[0].targets_exact_rate;
  o.pass = rate >= 0.95 && secs < 300.0;
  o.detail = fmt("targets exact in %.0f%% of 50 replicates (need >= 95%%), %d failures",
                 100.0 * rate, r.points[0].failures);
  o.seconds = secs;
  return o;
}

std::string means(const SweepResult& r, double SweepPoint::*field) {
  std::string s;
  for (const auto& p : r.points) s += fmt("%s%.3e", s.empty() ? "" : ", ", p.*field);
  return s;
}

// 5. Decoder error rate.
Outcome criterion_5(int workers) {
  const auto cfg = finite_sample_config(5, 20);
  const auto t0 = Clock::now();
  const auto r = run_sweep(cfg, workers);
  const double secs = seconds_since(t0);
  Outcome o = sweep_outcome(r, "criterion_5");
  std::vector<double> m;
  for (const auto& p : r.points) m.push_back(p.mean_decoder_error);
  const bool decreasing = std::is_sorted(m.rbegin(), m.rend(), std::less_equal<>()) &&
                          std::adjacent_find(m.begin(), m.end(), std::less_equal<>()) == m.end();
  const double slope = r.decoder_fit ? r.decoder_fit->slope : std::nan("");
  o.pass = decreasing && slope >= -0.65 && slope <= -0.35 && secs < 600.0;
  o.detail = fmt("mean decoder_error [%s], strictly decreasing %s, slope %.3f (need [-0.65, -0.35])",
                 means(r, &SweepPoint::mean_decoder_error).c_str(), decreasing ? "yes" : "no", slope);
  o.seconds = secs;
  return o;
}

// 6. Graph recovery.
Outcome criterion_6(int workers) {
  const auto cfg = finite_sample_config(6, 50);
  const auto t0 = Clock::now();
  const auto r = run_sweep(cfg, workers);
  const double secs = seconds_since(t0);
  Outcome o = sweep_outcome(r, "criterion_6");
  std::vector<double> rates;
  for (const auto& p : r.points) rates.push_back(p.graph_exact_rate);
  o.pass = rates.back() >= 0.9 && inversions(rates) <= 1 && secs < 600.0;
  o.detail = fmt("graph exact rates [%.2f, %.2f, %.2f] (need >= 0.90 at n=6.4e4, <= 1 inversion)",
                 rates[0], rates[1], rates[2]);
  o.seconds = secs;
  return o;
}

// 7. Perturbation of the Q(T) spectra.
Outcome criterion_7(int workers) {
  const auto cfg = finite_sample_config(5, 20);
  const auto r = run_sweep(cfg, workers);
  Outcome o = sweep_outcome(r, "criterion_7");
  std::vector<double> m;
  for (const auto& p : r.points) m.push_back(p.mean_q_perturbation);
  const bool decreasing = inversions(m) == 0 && m.front() > m.back();
  const double slope = r.q_fit ? r.q_fit->slope : std::nan("");
  o.pass = decreasing && slope >= -0.70 && slope <= -0.30;
  o.detail = fmt("mean max|lambda(Q_hat) - lambda(Q)| [%s], decreasing %s, slope %.3f (need [-0.70, -0.30])",
                 means(r, &SweepPoint::mean_q_perturbation).c_str(), decreasing ? "yes" : "no", slope);
  return o;
}

using Check = Outcome (*)(int);
const Check kChecks[] = {criterion_1, criterion_2, criterion_3, criterion_4,
                         criterion_5, criterion_6, criterion_7};

// 8. Everything above twice, the second time on more workers; outputs must match.
Outcome criterion_8(int workers) {
  const auto t0 = Clock::now();
  int differing = 0;
  std::string which;
  Outcome o;
  for (int c = 1; c <= 7; ++c) {
    const auto first = kChecks[c - 1](workers);
    const auto second = kChecks[c - 1](workers + 1);
    const bool same = first.artifacts == second.artifacts && first.detail == second.detail &&
                      first.pass == second.pass;
    if (!same) {
      ++differing;
      which += " " + std::to_string(c);
    }
  }
  o.pass = differing == 0;
  o.detail = differing == 0 ? "criteria 1-7 reproduce byte-for-byte (1 vs 2 workers)"
                            : "outputs differ for criteria" + which;
  o.seconds = seconds_since(t0);
  return o;
}

void write_artifacts(const fs::path& dir, const Outcome& o) {
  fs::create_directories(dir);
  for (const auto& [name, bytes] : o.artifacts) io::write_text(dir / name, bytes);
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  fs::path out = "acceptance_out";
  int workers = 1;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (a == "--workers" && i + 1 < argc) {
      workers = std::max(1, std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: acceptance [--criterion N] [--out DIR] [--workers N]\n");
      return 1;
    }
  }
  if (only < 0 || only > 8) {
    std::fprintf(stderr, "criterion must be 1..8\n");
    return 1;
  }

  bool all = true;
  for (int c = 1; c <= 8; ++c) {
    if (only != 0 && c != only) continue;
    Outcome o;
    try {
      o = c == 8 ? criterion_8(workers) : kChecks[c - 1](workers);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    write_artifacts(out, o);
    std::printf("criterion %d: %s  %s (%.1fs)\n", c, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                o.seconds);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
