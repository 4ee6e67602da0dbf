#pragma once

// Synthetic ground truth and sample generation.

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "crl/model.hpp"
#include "crl/rng.hpp"

namespace crl {

/// Centered unit-variance base distribution of the latent noise.
enum class NoiseDistribution { Gaussian, Uniform, RademacherMixture };

std::string to_string(NoiseDistribution dist);
NoiseDistribution parse_noise_distribution(const std::string& name);

struct ScaleRange {
  double lo = 0.5;
  double hi = 1.5;
};

struct GenConfig {
  int latent_dim = 8;     // d
  int observed_dim = 50;  // p
  int num_environments = 0;  // K; 0 picks the smallest feasible K
  double edge_prob = 0.3;
  int max_in_degree = 2;  // < 0 disables truncation
  double a_min = 0.5;
  double a_max = 0.9;
  ScaleRange scale_1{0.5, 1.5};
  ScaleRange scale_2{0.5, 1.5};
  double ratio_gap = 0.05;
  NoiseDistribution noise = NoiseDistribution::Gaussian;
  std::optional<MatrixXd> decoder;  // iid N(0,1) entries when absent
  std::uint64_t seed = 1;

  /// Throws InvalidInput when ranges or dimensions are inconsistent.
  void validate() const;
};

/// Smallest K with C(K, ⌊K/2⌋) ≥ d.
int auto_num_environments(int latent_dim);

/// Random DAG: upper-triangular pattern under a random node permutation,
/// each edge kept with edge_prob, in-degrees truncated to max_in_degree.
Adjacency sample_dag(const GenConfig& cfg, SeededRng& rng);

/// Edge weights uniform on [a_min, a_max] with a random sign.
MatrixXd sample_weights(const Adjacency& pattern, double a_min, double a_max, SeededRng& rng);

/// Strongly separating design from constant-weight codewords: node j gets the
/// j-th ⌊K/2⌋-subset of [K] in colex order as its pattern κ_j.
InterventionDesign make_sss_design(int latent_dim, int num_environments);

/// Two positive scale vectors whose ratios σ_{j,1}/σ_{j,2} are separated by at
/// least ratio_gap. Rejection sampling, 1000 attempts.
std::array<VectorXd, 2> sample_noise_scales(int latent_dim, const ScaleRange& range_1,
                                            const ScaleRange& range_2, double ratio_gap,
                                            SeededRng& rng);

/// SEM of one interventional environment. Intervened nodes are pinned to zero:
/// their incoming columns are removed and their noise scale is zero.
struct IntervenedSem {
  MatrixXd weights;
  std::array<VectorXd, 2> noise_scales;
  std::vector<bool> pinned;
};

IntervenedSem intervened_parameters(const SemParameters& sem, const NodeSet& targets);

/// Σ_Z = (I − Aᵀ)⁻¹ Σν (I − A)⁻¹ for the intervened SEM.
MatrixXd latent_covariance(const SemParameters& sem, const NodeSet& targets, int ell);

/// n samples of X = BZ from environment (k, ℓ), one per row.
MatrixXd simulate_environment(const GroundTruth& truth, int k, int ell, Index n, SeededRng& rng,
                              NoiseDistribution noise = NoiseDistribution::Gaussian);

/// Population covariances B Σ_Z Bᵀ for every (k, ℓ).
CovarianceSet exact_covariances(const GroundTruth& truth,
                                double rank_rel_tol = linalg::kDefaultRankTol);

/// Full instance drawn from the streams keyed by `seed`.
GroundTruth generate_ground_truth(const GenConfig& cfg, std::uint64_t seed);
inline GroundTruth generate_ground_truth(const GenConfig& cfg) {
  return generate_ground_truth(cfg, cfg.seed);
}

/// Samples for every (k, ℓ); n_per_env samples each.
EnvironmentDataset simulate_dataset(const GroundTruth& truth, Index n_per_env, std::uint64_t seed,
                                    NoiseDistribution noise = NoiseDistribution::Gaussian);

}  // namespace crl
