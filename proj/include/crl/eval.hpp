#pragma once

// Error metrics modulo the identifiability class (column scale and label
// permutation), plus log-log rate fitting.

#include <span>
#include <vector>

#include "crl/model.hpp"

namespace crl {

/// perm[m] is the true label of estimated node m; scales[m] multiplies the
/// true column to best match estimated column m.
struct Alignment {
  std::vector<int> perm;
  VectorXd scales;
};

struct EvaluationReport {
  Alignment alignment;
  double decoder_error = 0.0;           // signed per-column scales
  double decoder_error_positive = 0.0;  // scales restricted to be ≥ 0
  double max_angle_error = 0.0;         // radians, per column after alignment
  std::vector<bool> targets_exact_per_k;
  bool targets_exact = false;
  int graph_shd = 0;
  bool graph_exact = false;
  double pencil_eigenvalue_error = 0.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Hungarian matching on |cos| between columns, then least-squares scales.
Alignment align(const MatrixXd& decoder_hat, const MatrixXd& decoder);

/// (1/√d)·‖B̂ − B_π·diag(scales)‖_F. With `positive_only`, negative optimal
/// scales are clamped to zero.
double decoder_error(const MatrixXd& decoder_hat, const MatrixXd& decoder,
                     const Alignment& alignment, bool positive_only = false);

/// Largest per-column angle between B̂_m and B_π(m), in radians.
double max_angle_error(const MatrixXd& decoder_hat, const MatrixXd& decoder,
                       const Alignment& alignment);

struct GraphMetrics {
  int shd = 0;
  bool exact = false;
};

/// Directed SHD after relabeling the estimate by perm.
GraphMetrics graph_metrics(const Adjacency& graph_hat, const Adjacency& graph,
                           std::span<const int> perm);

/// Per environment, whether Î(k) relabeled by perm equals I(k).
std::vector<bool> target_metrics(const std::vector<NodeSet>& targets_hat,
                                 const std::vector<NodeSet>& targets, std::span<const int> perm);

/// Squared noise-scale ratios: the population pencil eigenvalues per node.
VectorXd pencil_eigenvalues(const SemParameters& sem);

/// Full report of an estimate against the generating instance. The decoder
/// alignment fixes the labeling used for every other metric.
EvaluationReport evaluate(const EstimationResult& result, const GroundTruth& truth);

/// Least-squares line through (log n, log err).
RateFit fit_rate(std::span<const double> ns, std::span<const double> errs);

}  // namespace crl
