#pragma once

// Experiment drivers: sample-size sweeps, the population oracle suite and
// fault injection.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "crl/config.hpp"
#include "crl/eval.hpp"

namespace crl {

/// max over nonempty T and all i of |λ_i(Q̂(T)) − λ_i(Q(T))|.
double q_perturbation(const CovarianceSet& estimated, const CovarianceSet& population);

/// Covariances of every (k, ℓ) from n fresh samples each. Environments are
/// simulated one at a time so only one sample matrix is alive at once.
/// Same streams as simulate_dataset(truth, n, seed, noise).
CovarianceSet streamed_covariances(const GroundTruth& truth, Index n, std::uint64_t seed,
                                   NoiseDistribution noise, const EstimatorConfig& est);

struct SweepRow {
  Index n = 0;
  int replicate = 0;
  std::uint64_t seed = 0;  // instance seed
  bool targets_exact = false;
  double decoder_error = 0.0;
  bool graph_exact = false;
  int graph_shd = -1;
  double pencil_eig_error = 0.0;
  double q_perturbation = 0.0;
  double runtime_ms = 0.0;
  std::string error;  // empty on success; "<stage>: <kind>" otherwise
};

struct SweepPoint {
  Index n = 0;
  int replicates = 0;
  int failures = 0;
  double targets_exact_rate = 0.0;  // over all replicates, failures count as misses
  double graph_exact_rate = 0.0;
  double mean_decoder_error = 0.0;  // over successful replicates
  double mean_graph_shd = 0.0;
  double mean_pencil_eig_error = 0.0;
  double mean_q_perturbation = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (n, replicate)
  std::vector<SweepPoint> points;
  std::optional<RateFit> decoder_fit;
  std::optional<RateFit> q_fit;
  std::optional<RateFit> pencil_fit;
};

/// One replicate: a fresh instance and fresh samples, both keyed by
/// (sweep seed, n, replicate).
SweepRow run_replicate(const ExperimentConfig& cfg, Index n, int replicate);

/// All (n, replicate) jobs spread over `workers` threads. Output does not
/// depend on the worker count.
SweepResult run_sweep(const ExperimentConfig& cfg, int workers);

std::string sweep_csv(const SweepResult& result, bool include_timing = true);
nlohmann::json sweep_summary_json(const SweepResult& result);

enum class Injection { None, EqualRatios, DuplicatePattern };

struct OracleCase {
  int index = 0;
  int latent_dim = 0;
  int observed_dim = 0;
  NoiseDistribution noise = NoiseDistribution::Gaussian;
  std::uint64_t seed = 0;
  bool targets_ok = false;
  bool decoder_ok = false;
  bool graph_ok = false;
  bool eigenvalues_ok = false;
  double max_angle = 0.0;
  double eigenvalue_error = 0.0;
  int graph_shd = -1;
  bool pencil_collision = false;
  std::string error;

  bool pass() const { return error.empty() && targets_ok && decoder_ok && graph_ok && eigenvalues_ok; }
};

struct OracleReport {
  std::vector<OracleCase> cases;
  bool all_pass() const;
  int passed() const;
};

inline constexpr double kOracleAngleTol = 1e-8;
inline constexpr double kOracleEigenTol = 1e-8;

/// Population pipeline on one instance, judged against the truth.
OracleCase check_population(const GroundTruth& truth, const EstimatorConfig& est);

/// Applies a fault to a generated instance.
GroundTruth inject(const GroundTruth& truth, Injection injection);

/// Instances cycle through oracle.latent_dims with p = observed_factor · d and
/// alternate gaussian/uniform noise labels.
OracleReport run_oracle_suite(const ExperimentConfig& cfg, Injection injection = Injection::None);

nlohmann::json oracle_report_json(const OracleReport& report);

}  // namespace crl
