#pragma once

// Three-stage estimator: intervention targets from intersection dimensions,
// decoder columns from pattern-wise intersections, latent graph from the
// observational covariance pencil.

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "crl/model.hpp"

namespace crl {

enum class AlphaMode { Fixed, Auto };

struct Thresholds {
  double rho = 0.5;            // eigen-count threshold, in (0,1]
  double alpha = 0.1;          // graph threshold (AlphaMode::Fixed)
  AlphaMode alpha_mode = AlphaMode::Auto;
  double rank_rel_tol = linalg::kDefaultRankTol;
  double pd_floor = 1e-10;
  bool repair_acyclicity = false;

  void validate() const;
};

struct EstimatorConfig {
  Thresholds thresholds;
  bool center = false;  // subtract sample means before forming second moments
};

/// (1/n) XᵀX, optionally after centering the columns of X.
MatrixXd second_moment(const MatrixXd& samples, bool center = false);

CovarianceSet empirical_covariances(const EnvironmentDataset& data,
                                    double rank_rel_tol = linalg::kDefaultRankTol,
                                    bool center = false);

/// Q̂(T) from the pooled projectors of the environments in T (T ≠ ∅).
MatrixXd q_matrix(EnvMask environments, const CovarianceSet& covs);

/// ĝ_ρ(T); for T = ∅ the detected observational rank.
int g_hat(EnvMask environments, const CovarianceSet& covs, double rho);

/// Superset Möbius inversion over the subset lattice of [K]:
/// c(T) = Σ_{T' ⊇ T} (−1)^{|T'∖T|} g(T'). `values` is indexed by mask.
std::vector<int> superset_mobius(std::vector<int> values, int num_environments);

/// Dimension table g(T), pattern counts c(T) and the recovered node patterns.
struct PatternTable {
  int num_environments = 0;
  std::vector<int> dims;    // g(T) indexed by mask
  std::vector<int> counts;  // c(T) indexed by mask
  std::vector<EnvMask> node_patterns;  // c(T) = 1, ascending mask (colex) order

  int latent_dim() const { return static_cast<int>(node_patterns.size()); }
};

struct TargetEstimate {
  PatternTable table;
  std::vector<NodeSet> targets;       // Î(1..K)
  std::vector<double> count_margins;  // per mask, min_i |λ_i(Q̂(T)) − ρ|
};

/// Pattern table and targets from a full table of intersection dimensions.
/// Throws TargetInconsistency when the counts are not a 0/1 antichain.
TargetEstimate targets_from_dimensions(std::vector<int> dims, int num_environments);

TargetEstimate reconstruct_targets(const CovarianceSet& covs, double rho);

struct DecoderEstimate {
  MatrixXd decoder;               // p × d̂, unit columns
  std::vector<int> multiplicity;  // dimension of the ≥ρ eigenspace per column
  bool flagged = false;           // some multiplicity differs from 1
};

DecoderEstimate estimate_decoder(const CovarianceSet& covs, const PatternTable& patterns,
                                 double rho);

/// Moore–Penrose pseudoinverse of a full-column-rank decoder.
MatrixXd decoder_pseudoinverse(const MatrixXd& decoder);

/// Ẑ = B̂†X for every environment; rows are samples.
std::map<EnvKey, MatrixXd> extract_representations(const MatrixXd& decoder,
                                                   const EnvironmentDataset& data);

/// Σ̂_Z^{(0),ℓ} = B̂† Σ̂_X^{(0),ℓ} B̂†ᵀ for ℓ = 1, 2.
std::pair<MatrixXd, MatrixXd> recover_latent_covs(const MatrixXd& decoder,
                                                  const CovarianceSet& covs);

struct GraphEstimate {
  MatrixXd pencil_vectors;  // column j: eigenvector assigned to node j, unit at (j,j)
  VectorXd eigenvalues;     // pencil eigenvalue of node j
  std::vector<int> assignment;  // eigenvector m -> node
  Adjacency graph;
  double alpha = 0.0;
  bool acyclic = true;
  double min_relative_gap = 0.0;
  std::optional<double> alpha_repaired;
  std::optional<Adjacency> graph_repaired;
};

/// Edge j1 -> j2 iff j1 != j2 and |T(j1, j2)| > alpha.
Adjacency threshold_graph(const MatrixXd& pencil_vectors, double alpha);

/// Threshold at the largest relative gap among the sorted off-diagonal
/// magnitudes.
double auto_alpha(const MatrixXd& pencil_vectors);

GraphEstimate estimate_graph(const MatrixXd& latent_cov_1, const MatrixXd& latent_cov_2,
                             const Thresholds& thresholds);

/// Full pipeline from population or empirical covariances.
EstimationResult run_pipeline(const CovarianceSet& covs, const EstimatorConfig& config);
/// Full pipeline from samples.
EstimationResult run_pipeline(const EnvironmentDataset& data, const EstimatorConfig& config);

}  // namespace crl
