#pragma once

// Domain types shared by generation, estimation and evaluation.
//
// Conventions used throughout:
//   * latent nodes are 0-based indices 0..d-1;
//   * environment 0 is observational, 1..K are interventional;
//   * a set of interventional environments is an EnvMask with bit (k-1)
//     standing for environment k;
//   * adjacency matrices are row = parent, column = child, and A(u,v) != 0
//     means an edge u -> v.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crl/linalg.hpp"

namespace crl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Adjacency = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using EnvMask = std::uint32_t;
using NodeSet = std::vector<int>;  // sorted, unique

/// Largest K for which the subset lattice over environments is enumerated.
inline constexpr int kMaxEnvironments = 20;

inline bool env_in(EnvMask mask, int k) { return (mask >> (k - 1)) & 1u; }
inline EnvMask env_bit(int k) { return EnvMask{1} << (k - 1); }

/// Topological order of the graph with the given adjacency (row = parent), or
/// nullopt when it contains a cycle.
std::optional<std::vector<int>> topological_order(const Adjacency& adjacency);

/// Support pattern of A: true where |a_uv| > 0.
Adjacency support(const MatrixXd& weights);

/// Weights and noise scales of a latent linear SEM  Z = AᵀZ + ν.
/// noise_scales[ℓ](j) is the standard deviation of ν_j in noise setting ℓ+1.
class SemParameters {
 public:
  SemParameters(MatrixXd weights, VectorXd noise_scale_1, VectorXd noise_scale_2);

  Index dim() const { return weights_.rows(); }
  const MatrixXd& weights() const { return weights_; }
  const VectorXd& noise_scales(int ell) const { return scales_.at(static_cast<std::size_t>(ell - 1)); }
  const std::vector<int>& order() const { return order_; }
  Adjacency graph() const { return support(weights_); }

  /// σ_{j,1}/σ_{j,2} per node.
  VectorXd scale_ratios() const;

 private:
  MatrixXd weights_;
  std::array<VectorXd, 2> scales_;
  std::vector<int> order_;
};

/// Intervention targets I(1..K) over d latent nodes, plus the observational
/// environment k = 0.
class InterventionDesign {
 public:
  /// Validates strong separation; throws InvalidInput otherwise.
  InterventionDesign(int dim, std::vector<NodeSet> targets);

  /// Skips the separation check. Used to build deliberately broken designs.
  static InterventionDesign unchecked(int dim, std::vector<NodeSet> targets);

  int dim() const { return dim_; }
  int num_environments() const { return static_cast<int>(targets_.size()); }
  const std::vector<NodeSet>& targets() const { return targets_; }
  /// Targets of environment k (k = 0 is observational and returns the empty set).
  const NodeSet& targets(int k) const;
  bool includes_observational() const { return true; }

  /// κ_j: environments in which node j is not intervened on.
  EnvMask pattern(int node) const;
  /// S(k) = complement of I(k).
  NodeSet support(int k) const;
  bool intervened(int node, int k) const;

  /// Pairwise strong separation checked by enumerating all ordered pairs.
  bool strongly_separating() const;

 private:
  InterventionDesign() = default;
  void normalize_and_check_ranges();

  int dim_ = 0;
  std::vector<NodeSet> targets_;
  std::vector<EnvMask> patterns_;
};

/// Latent SEM, decoder and intervention design.
struct GroundTruth {
  GroundTruth(SemParameters sem, MatrixXd decoder, InterventionDesign design);

  SemParameters sem;
  MatrixXd decoder;  // p × d
  InterventionDesign design;

  Index observed_dim() const { return decoder.rows(); }
  Index latent_dim() const { return decoder.cols(); }
};

/// (k, ℓ) pair identifying one environment / noise setting.
struct EnvKey {
  int k = 0;
  int ell = 1;
  friend auto operator<=>(const EnvKey&, const EnvKey&) = default;
};

/// Sample matrices (rows are observations) per environment.
struct EnvironmentDataset {
  Index observed_dim = 0;
  int num_environments = 0;  // K
  std::optional<Index> latent_dim;
  std::map<EnvKey, MatrixXd> samples;

  /// Inserts after checking the column count and that the matrix has rows.
  void add(EnvKey key, MatrixXd x);
  std::size_t sample_count(EnvKey key) const;
};

/// Per-(k,ℓ) second-moment matrices with pooled per-k column-space projectors.
struct CovarianceSet {
  Index observed_dim = 0;
  int num_environments = 0;
  std::map<EnvKey, MatrixXd> covariances;
  std::vector<linalg::Projector<double>> pooled;  // indexed by k = 0..K
  std::vector<Index> ranks;                       // detected rank per k

  /// Builds the pooled projectors and ranks from `covariances` (each k pools
  /// all ℓ present).
  static CovarianceSet from_covariances(Index observed_dim, int num_environments,
                                        std::map<EnvKey, MatrixXd> covariances,
                                        double rank_rel_tol);

  /// Pooled covariance of environment k (sum over ℓ).
  MatrixXd pooled_covariance(int k) const;
  const MatrixXd& covariance(int k, int ell) const;
};

struct EstimationDiagnostics {
  std::vector<double> count_margins;  // per T, distance of Q̂(T) spectrum to rho
  double min_count_margin = 0.0;
  std::vector<int> decoder_multiplicity;  // ≥ρ eigenspace dimension per node
  bool decoder_flagged = false;
  double pencil_min_gap = 0.0;  // smallest relative gap between pencil eigenvalues
  bool pencil_collision = false;
  double latent_cov_min_eig = 0.0;
  bool pd_floor_hit = false;
  double alpha_used = 0.0;
  bool acyclic = true;
  std::optional<double> alpha_repaired;
  std::optional<Adjacency> graph_repaired;
};

/// Output of the three-stage estimator. Node labels are the colex order of
/// the recovered patterns.
struct EstimationResult {
  int num_environments = 0;
  std::vector<NodeSet> targets_hat;  // Î(1..K)
  std::vector<EnvMask> patterns_hat; // κ̂_j per recovered node
  MatrixXd decoder_hat;              // p × d̂, unit columns
  MatrixXd pencil_vectors;           // T̂_Z, unit diagonal
  Adjacency graph_hat;
  VectorXd pencil_eigenvalues;       // per recovered node
  EstimationDiagnostics diagnostics;

  Index latent_dim() const { return decoder_hat.cols(); }
};

struct AssumptionReport {
  bool a1_pass = false;
  double a2_margin = 0.0;  // minimum pairwise gap between scale ratios
  bool a2_pass = false;    // margin ≥ requested ratio gap
  double one_minus_rho_star = 0.0;
  double condition = 0.0;  // λ⁺/λ⁻ over the population covariances
};

/// Checks strong separation and distinct noise ratios, and reports the
/// decoder conditioning. Never throws.
AssumptionReport validate_assumptions(const GroundTruth& truth, double ratio_gap = 0.05);

/// Minimum pairwise |r_i - r_j| over the entries of r (infinity when size < 2).
double min_pairwise_gap(const VectorXd& r);

}  // namespace crl
