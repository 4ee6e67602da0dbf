#include "crl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crl/synth.hpp"

namespace crl {

std::optional<std::vector<int>> topological_order(const Adjacency& adjacency) {
  const Index d = adjacency.rows();
  std::vector<int> indegree(static_cast<std::size_t>(d), 0);
  for (Index u = 0; u < d; ++u) {
    for (Index v = 0; v < d; ++v) {
      if (adjacency(u, v)) ++indegree[static_cast<std::size_t>(v)];
    }
  }
  std::vector<int> order;
  std::vector<bool> done(static_cast<std::size_t>(d), false);
  order.reserve(static_cast<std::size_t>(d));
  // Kahn's algorithm, always taking the lowest ready index.
  for (Index step = 0; step < d; ++step) {
    int next = -1;
    for (Index v = 0; v < d; ++v) {
      if (!done[static_cast<std::size_t>(v)] && indegree[static_cast<std::size_t>(v)] == 0) {
        next = static_cast<int>(v);
        break;
      }
    }
    if (next < 0) return std::nullopt;
    done[static_cast<std::size_t>(next)] = true;
    order.push_back(next);
    for (Index v = 0; v < d; ++v) {
      if (adjacency(next, v)) --indegree[static_cast<std::size_t>(v)];
    }
  }
  return order;
}

Adjacency support(const MatrixXd& weights) { return weights.array() != 0.0; }

double min_pairwise_gap(const VectorXd& r) {
  if (r.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> sorted(r.data(), r.data() + r.size());
  std::sort(sorted.begin(), sorted.end());
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < sorted.size(); ++i) gap = std::min(gap, sorted[i] - sorted[i - 1]);
  return gap;
}

// ---------------------------------------------------------------------------

SemParameters::SemParameters(MatrixXd weights, VectorXd noise_scale_1, VectorXd noise_scale_2)
    : weights_(std::move(weights)), scales_{std::move(noise_scale_1), std::move(noise_scale_2)} {
  const Index d = weights_.rows();
  if (weights_.cols() != d || d < 1) {
    throw Error(ErrorKind::InvalidInput, "SEM weight matrix must be square and non-empty");
  }
  if (!weights_.allFinite()) {
    throw Error(ErrorKind::InvalidInput, "SEM weights must be finite");
  }
  if (weights_.diagonal().cwiseAbs().maxCoeff() != 0.0) {
    throw Error(ErrorKind::InvalidInput, "SEM weight matrix must have a zero diagonal");
  }
  for (const auto& s : scales_) {
    if (s.size() != d) {
      throw Error(ErrorKind::InvalidInput, "noise scale vector length differs from d");
    }
    if (!s.allFinite() || (s.array() <= 0.0).any()) {
      throw Error(ErrorKind::InvalidInput, "noise scales must be finite and positive");
    }
  }
  auto order = topological_order(support(weights_));
  if (!order) {
    throw Error(ErrorKind::InvalidInput, "SEM weight matrix is cyclic");
  }
  order_ = std::move(*order);
}

VectorXd SemParameters::scale_ratios() const { return scales_[0].cwiseQuotient(scales_[1]); }

// ---------------------------------------------------------------------------

InterventionDesign::InterventionDesign(int dim, std::vector<NodeSet> targets)
    : dim_(dim), targets_(std::move(targets)) {
  normalize_and_check_ranges();
  if (!strongly_separating()) {
    throw Error(ErrorKind::InvalidInput, "intervention design is not strongly separating");
  }
}

InterventionDesign InterventionDesign::unchecked(int dim, std::vector<NodeSet> targets) {
  InterventionDesign design;
  design.dim_ = dim;
  design.targets_ = std::move(targets);
  design.normalize_and_check_ranges();
  return design;
}

void InterventionDesign::normalize_and_check_ranges() {
  if (dim_ < 1) throw Error(ErrorKind::InvalidInput, "design needs at least one node");
  if (static_cast<int>(targets_.size()) > kMaxEnvironments) {
    throw Error(ErrorKind::InvalidInput, "too many environments");
  }
  for (auto& set : targets_) {
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    for (int j : set) {
      if (j < 0 || j >= dim_) throw Error(ErrorKind::InvalidInput, "target index out of range");
    }
  }
  patterns_.assign(static_cast<std::size_t>(dim_), 0);
  for (int k = 1; k <= num_environments(); ++k) {
    for (int j = 0; j < dim_; ++j) {
      if (!intervened(j, k)) patterns_[static_cast<std::size_t>(j)] |= env_bit(k);
    }
  }
}

const NodeSet& InterventionDesign::targets(int k) const {
  static const NodeSet kEmpty;
  if (k == 0) return kEmpty;
  return targets_.at(static_cast<std::size_t>(k - 1));
}

bool InterventionDesign::intervened(int node, int k) const {
  const auto& set = targets(k);
  return std::binary_search(set.begin(), set.end(), node);
}

EnvMask InterventionDesign::pattern(int node) const {
  return patterns_.at(static_cast<std::size_t>(node));
}

NodeSet InterventionDesign::support(int k) const {
  NodeSet out;
  for (int j = 0; j < dim_; ++j) {
    if (!intervened(j, k)) out.push_back(j);
  }
  return out;
}

bool InterventionDesign::strongly_separating() const {
  for (int j1 = 0; j1 < dim_; ++j1) {
    for (int j2 = 0; j2 < dim_; ++j2) {
      if (j1 == j2) continue;
      bool separated = false;
      for (int k = 1; k <= num_environments() && !separated; ++k) {
        separated = intervened(j1, k) && !intervened(j2, k);
      }
      if (!separated) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

GroundTruth::GroundTruth(SemParameters sem_in, MatrixXd decoder_in, InterventionDesign design_in)
    : sem(std::move(sem_in)), decoder(std::move(decoder_in)), design(std::move(design_in)) {
  const Index d = sem.dim();
  if (decoder.cols() != d || design.dim() != d) {
    throw Error(ErrorKind::InvalidInput, "decoder, SEM and design disagree on latent dimension");
  }
  if (decoder.rows() < d) {
    throw Error(ErrorKind::InvalidInput, "decoder must have p >= d");
  }
  if (!decoder.allFinite()) throw Error(ErrorKind::InvalidInput, "decoder must be finite");
  Eigen::JacobiSVD<MatrixXd> svd(decoder);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) < 1e-10 * sv(0)) {
    throw Error(ErrorKind::InvalidInput, "decoder does not have full column rank");
  }
}

// ---------------------------------------------------------------------------

void EnvironmentDataset::add(EnvKey key, MatrixXd x) {
  if (x.rows() < 1) throw Error(ErrorKind::InvalidInput, "sample matrix has no rows");
  if (observed_dim == 0) observed_dim = x.cols();
  if (x.cols() != observed_dim) {
    throw Error(ErrorKind::InvalidInput, "sample matrix column count differs from p");
  }
  if (key.k < 0 || (key.ell != 1 && key.ell != 2)) {
    throw Error(ErrorKind::InvalidInput, "environment key out of range");
  }
  num_environments = std::max(num_environments, key.k);
  samples[key] = std::move(x);
}

std::size_t EnvironmentDataset::sample_count(EnvKey key) const {
  auto it = samples.find(key);
  return it == samples.end() ? 0 : static_cast<std::size_t>(it->second.rows());
}

// ---------------------------------------------------------------------------

CovarianceSet CovarianceSet::from_covariances(Index observed_dim, int num_environments,
                                              std::map<EnvKey, MatrixXd> covariances,
                                              double rank_rel_tol) {
  CovarianceSet set;
  set.observed_dim = observed_dim;
  set.num_environments = num_environments;
  set.covariances = std::move(covariances);
  for (const auto& [key, cov] : set.covariances) {
    if (cov.rows() != observed_dim || cov.cols() != observed_dim) {
      throw Error(ErrorKind::InvalidInput, "covariance has wrong shape");
    }
  }
  for (int k = 0; k <= num_environments; ++k) {
    auto proj = linalg::orth_projector(set.pooled_covariance(k), rank_rel_tol);
    set.ranks.push_back(proj.rank);
    set.pooled.push_back(std::move(proj));
  }
  return set;
}

MatrixXd CovarianceSet::pooled_covariance(int k) const {
  MatrixXd sum = MatrixXd::Zero(observed_dim, observed_dim);
  bool any = false;
  for (int ell = 1; ell <= 2; ++ell) {
    auto it = covariances.find(EnvKey{k, ell});
    if (it != covariances.end()) {
      sum += it->second;
      any = true;
    }
  }
  if (!any) {
    throw Error(ErrorKind::InvalidInput,
                "no covariance for environment " + std::to_string(k));
  }
  return sum;
}

const MatrixXd& CovarianceSet::covariance(int k, int ell) const {
  auto it = covariances.find(EnvKey{k, ell});
  if (it == covariances.end()) {
    throw Error(ErrorKind::InvalidInput, "no covariance for environment (" + std::to_string(k) +
                                             "," + std::to_string(ell) + ")");
  }
  return it->second;
}

// ---------------------------------------------------------------------------

AssumptionReport validate_assumptions(const GroundTruth& truth, double ratio_gap) {
  AssumptionReport report;
  report.a1_pass = truth.design.strongly_separating();
  report.a2_margin = min_pairwise_gap(truth.sem.scale_ratios());
  report.a2_pass = report.a2_margin > 0.0 && report.a2_margin >= ratio_gap;

  Eigen::SelfAdjointEigenSolver<MatrixXd> gram(truth.decoder.transpose() * truth.decoder,
                                               Eigen::EigenvaluesOnly);
  const auto& ev = gram.eigenvalues();
  report.one_minus_rho_star = ev(ev.size() - 1) > 0.0 ? ev(0) / ev(ev.size() - 1) : 0.0;

  double lambda_plus = 0.0;
  double lambda_minus = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= truth.design.num_environments(); ++k) {
    const Index r = static_cast<Index>(truth.design.support(k).size());
    if (r == 0) continue;
    for (int ell = 1; ell <= 2; ++ell) {
      const MatrixXd sigma_x = truth.decoder *
                               latent_covariance(truth.sem, truth.design.targets(k), ell) *
                               truth.decoder.transpose();
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma_x, Eigen::EigenvaluesOnly);
      const auto& lam = es.eigenvalues();  // ascending
      lambda_plus = std::max(lambda_plus, lam(lam.size() - 1));
      lambda_minus = std::min(lambda_minus, lam(lam.size() - r));
    }
  }
  report.condition = lambda_minus > 0.0 && std::isfinite(lambda_minus)
                         ? lambda_plus / lambda_minus
                         : std::numeric_limits<double>::infinity();
  return report;
}

}  // namespace crl
