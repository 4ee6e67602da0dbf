#include "crl/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "crl/assignment.hpp"

namespace crl {

void Thresholds::validate() const {
  if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorKind::InvalidInput, "rho must lie in (0,1]");
  if (!(alpha >= 0.0)) throw Error(ErrorKind::InvalidInput, "alpha must be nonnegative");
  if (!(rank_rel_tol > 0.0 && rank_rel_tol < 1.0)) {
    throw Error(ErrorKind::InvalidInput, "rank tolerance must lie in (0,1)");
  }
  if (!(pd_floor > 0.0)) throw Error(ErrorKind::InvalidInput, "pd_floor must be positive");
}

MatrixXd second_moment(const MatrixXd& samples, bool center) {
  const Index n = samples.rows();
  const Index p = samples.cols();
  if (n < 1) throw Error(ErrorKind::InvalidInput, "no samples");
  MatrixXd out = MatrixXd::Zero(p, p);
  if (center) {
    const MatrixXd centered = samples.rowwise() - samples.colwise().mean();
    out.selfadjointView<Eigen::Upper>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n));
  } else {
    out.selfadjointView<Eigen::Upper>().rankUpdate(samples.transpose(), 1.0 / static_cast<double>(n));
  }
  linalg::mirror_upper(out);
  return out;
}

CovarianceSet empirical_covariances(const EnvironmentDataset& data, double rank_rel_tol,
                                    bool center) {
  if (data.samples.empty()) throw Error(ErrorKind::InvalidInput, "dataset is empty");
  std::map<EnvKey, MatrixXd> covs;
  for (const auto& [key, x] : data.samples) covs.emplace(key, second_moment(x, center));
  return CovarianceSet::from_covariances(data.observed_dim, data.num_environments, std::move(covs),
                                         rank_rel_tol);
}

MatrixXd q_matrix(EnvMask environments, const CovarianceSet& covs) {
  linalg::ProjectorChain<double> chain;
  for (int k = 1; k <= covs.num_environments; ++k) {
    if (env_in(environments, k)) chain.push_back(k, covs.pooled.at(static_cast<std::size_t>(k)));
  }
  return linalg::projector_product(chain);
}

int g_hat(EnvMask environments, const CovarianceSet& covs, double rho) {
  if (environments == 0) return static_cast<int>(covs.ranks.at(0));
  return static_cast<int>(linalg::eigen_count(q_matrix(environments, covs), rho));
}

std::vector<int> superset_mobius(std::vector<int> values, int num_environments) {
  const std::size_t full = std::size_t{1} << num_environments;
  if (values.size() != full) {
    throw Error(ErrorKind::InvalidInput, "lattice table has the wrong size");
  }
  for (int bit = 0; bit < num_environments; ++bit) {
    const std::size_t b = std::size_t{1} << bit;
    for (std::size_t mask = 0; mask < full; ++mask) {
      if (!(mask & b)) values[mask] -= values[mask | b];
    }
  }
  return values;
}

TargetEstimate targets_from_dimensions(std::vector<int> dims, int num_environments) {
  if (num_environments < 1 || num_environments > kMaxEnvironments) {
    throw Error(ErrorKind::InvalidInput, "need 1 <= K <= " + std::to_string(kMaxEnvironments));
  }
  TargetEstimate out;
  out.table.num_environments = num_environments;
  out.table.counts = superset_mobius(dims, num_environments);
  out.table.dims = std::move(dims);

  const auto& counts = out.table.counts;
  int total = 0;
  for (std::size_t mask = 0; mask < counts.size(); ++mask) {
    const int c = counts[mask];
    if (c < 0 || c > 1) {
      throw Error(ErrorKind::TargetInconsistency,
                  "pattern count c(" + std::to_string(mask) + ") = " + std::to_string(c));
    }
    total += c;
    if (c == 1 && mask != 0) out.table.node_patterns.push_back(static_cast<EnvMask>(mask));
  }
  if (counts[0] != 0) {
    throw Error(ErrorKind::TargetInconsistency, "a node is intervened on in every environment");
  }
  if (total != out.table.dims[0]) {
    throw Error(ErrorKind::TargetInconsistency,
                "pattern counts sum to " + std::to_string(total) + " but d̂ = " +
                    std::to_string(out.table.dims[0]));
  }

  out.targets.assign(static_cast<std::size_t>(num_environments), {});
  for (int k = 1; k <= num_environments; ++k) {
    for (std::size_t j = 0; j < out.table.node_patterns.size(); ++j) {
      if (!env_in(out.table.node_patterns[j], k)) {
        out.targets[static_cast<std::size_t>(k - 1)].push_back(static_cast<int>(j));
      }
    }
  }
  return out;
}

TargetEstimate reconstruct_targets(const CovarianceSet& covs, double rho) {
  const int big_k = covs.num_environments;
  if (big_k < 1 || big_k > kMaxEnvironments) {
    throw Error(ErrorKind::InvalidInput, "need 1 <= K <= " + std::to_string(kMaxEnvironments));
  }
  const std::size_t full = std::size_t{1} << big_k;
  std::vector<int> dims(full, 0);
  std::vector<double> margins(full, std::numeric_limits<double>::infinity());
  dims[0] = static_cast<int>(covs.ranks.at(0));
  for (std::size_t mask = 1; mask < full; ++mask) {
    const auto spectrum = linalg::unit_interval_spectrum(q_matrix(static_cast<EnvMask>(mask), covs));
    dims[mask] = static_cast<int>((spectrum.eigenvalues.array() >= rho).count());
    margins[mask] = (spectrum.eigenvalues.array() - rho).abs().minCoeff();
  }
  auto out = targets_from_dimensions(std::move(dims), big_k);
  out.count_margins = std::move(margins);
  return out;
}

DecoderEstimate estimate_decoder(const CovarianceSet& covs, const PatternTable& patterns,
                                 double rho) {
  DecoderEstimate out;
  const Index p = covs.observed_dim;
  const Index d_hat = patterns.latent_dim();
  out.decoder.resize(p, d_hat);
  for (Index j = 0; j < d_hat; ++j) {
    const EnvMask pattern = patterns.node_patterns[static_cast<std::size_t>(j)];
    const auto spectrum = linalg::unit_interval_spectrum(q_matrix(pattern, covs));
    const int multiplicity = static_cast<int>((spectrum.eigenvalues.array() >= rho).count());
    out.multiplicity.push_back(multiplicity);
    if (multiplicity != 1) out.flagged = true;
    if (spectrum.eigenvalues(0) <= linalg::kZeroFloor) {
      throw Error(ErrorKind::DecoderDegenerate,
                  "empty intersection for node " + std::to_string(j));
    }
    // Top eigenvector: unit norm, sign already canonical.
    out.decoder.col(j) = spectrum.eigenvectors.col(0);
  }
  return out;
}

MatrixXd decoder_pseudoinverse(const MatrixXd& decoder) {
  if (decoder.cols() == 0 || decoder.rows() < decoder.cols()) {
    throw Error(ErrorKind::DecoderDegenerate, "decoder cannot have full column rank");
  }
  Eigen::JacobiSVD<MatrixXd> svd(decoder, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  if (sv(sv.size() - 1) < 1e-10 * sv(0)) {
    throw Error(ErrorKind::DecoderDegenerate, "decoder is rank deficient");
  }
  return svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

std::map<EnvKey, MatrixXd> extract_representations(const MatrixXd& decoder,
                                                   const EnvironmentDataset& data) {
  const MatrixXd pinv = decoder_pseudoinverse(decoder);
  std::map<EnvKey, MatrixXd> out;
  for (const auto& [key, x] : data.samples) out.emplace(key, x * pinv.transpose());
  return out;
}

std::pair<MatrixXd, MatrixXd> recover_latent_covs(const MatrixXd& decoder,
                                                  const CovarianceSet& covs) {
  const MatrixXd pinv = decoder_pseudoinverse(decoder);
  auto peel = [&](int ell) {
    const MatrixXd m = pinv * covs.covariance(0, ell) * pinv.transpose();
    return MatrixXd((m + m.transpose()) / 2.0);
  };
  return {peel(1), peel(2)};
}

Adjacency threshold_graph(const MatrixXd& pencil_vectors, double alpha) {
  Adjacency g = pencil_vectors.cwiseAbs().array() > alpha;
  g.diagonal().setConstant(false);
  return g;
}

double auto_alpha(const MatrixXd& pencil_vectors) {
  constexpr double kAbsoluteFloor = 1e-8;
  constexpr double kBand = 0.1;  // cuts below kBand·max are ignored
  std::vector<double> values;
  for (Index j = 0; j < pencil_vectors.cols(); ++j) {
    for (Index i = 0; i < pencil_vectors.rows(); ++i) {
      if (i != j) values.push_back(std::abs(pencil_vectors(i, j)));
    }
  }
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double top = values.back();
  if (top <= kAbsoluteFloor) return kAbsoluteFloor;

  double best_gap = -1.0;
  double alpha = 0.0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    const double lo = values[i];
    const double hi = values[i + 1];
    if (hi < kBand * top || hi <= 0.0) continue;
    const double gap = 1.0 - lo / hi;
    if (gap > best_gap) {
      best_gap = gap;
      alpha = 0.5 * (lo + hi);
    }
  }
  if (best_gap < 0.0) return values[values.size() / 2];  // median fallback
  return alpha;
}

GraphEstimate estimate_graph(const MatrixXd& latent_cov_1, const MatrixXd& latent_cov_2,
                             const Thresholds& thresholds) {
  linalg::GeneralizedSpectrum<double> pencil;
  try {
    pencil = linalg::generalized_sym_eig(latent_cov_1, latent_cov_2, thresholds.pd_floor);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NotPD) throw Error(ErrorKind::GraphDegenerate, e.detail());
    throw;
  }
  const Index d = pencil.eigenvalues.size();
  GraphEstimate out;

  // Scale-free matching: maximize Σ log|t_m[π(m)]|. At the population level the
  // eigenvector matrix is (I − A)D, whose only nonvanishing permutation term
  // is the identity because A is acyclic.
  MatrixXd weights(d, d);
  for (Index m = 0; m < d; ++m) {
    const double scale = pencil.eigenvectors.col(m).cwiseAbs().maxCoeff();
    for (Index j = 0; j < d; ++j) {
      const double rel = std::abs(pencil.eigenvectors(j, m)) / scale;
      weights(m, j) = std::log(std::max(rel, 1e-300));
    }
  }
  out.assignment = max_weight_assignment(weights);

  out.pencil_vectors.resize(d, d);
  out.eigenvalues.resize(d);
  for (Index m = 0; m < d; ++m) {
    const int node = out.assignment[static_cast<std::size_t>(m)];
    const double pivot = pencil.eigenvectors(node, m);
    if (std::abs(pivot) < 1e-10 * pencil.eigenvectors.col(m).cwiseAbs().maxCoeff()) {
      throw Error(ErrorKind::AssignmentAmbiguous,
                  "eigenvector " + std::to_string(m) + " has a vanishing matched entry");
    }
    out.pencil_vectors.col(node) = pencil.eigenvectors.col(m) / pivot;
    out.eigenvalues(node) = pencil.eigenvalues(m);
  }

  out.min_relative_gap = std::numeric_limits<double>::infinity();
  for (Index m = 0; m + 1 < d; ++m) {
    const double denom = std::max(std::abs(pencil.eigenvalues(m)), 1e-300);
    out.min_relative_gap = std::min(
        out.min_relative_gap, (pencil.eigenvalues(m) - pencil.eigenvalues(m + 1)) / denom);
  }

  out.alpha = thresholds.alpha_mode == AlphaMode::Auto ? auto_alpha(out.pencil_vectors)
                                                       : thresholds.alpha;
  out.graph = threshold_graph(out.pencil_vectors, out.alpha);
  out.acyclic = topological_order(out.graph).has_value();

  if (!out.acyclic && thresholds.repair_acyclicity) {
    std::vector<double> cuts;
    for (Index j = 0; j < d; ++j) {
      for (Index i = 0; i < d; ++i) {
        if (out.graph(i, j)) cuts.push_back(std::abs(out.pencil_vectors(i, j)));
      }
    }
    std::sort(cuts.begin(), cuts.end());
    for (double cut : cuts) {
      Adjacency candidate = threshold_graph(out.pencil_vectors, cut);
      if (topological_order(candidate)) {
        out.alpha_repaired = cut;
        out.graph_repaired = std::move(candidate);
        break;
      }
    }
  }
  return out;
}

namespace {

template <typename F>
auto staged(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw e.with_stage(stage);
  }
}

}  // namespace

EstimationResult run_pipeline(const CovarianceSet& covs, const EstimatorConfig& config) {
  const Thresholds& th = config.thresholds;
  staged("config", [&] {
    th.validate();
    return 0;
  });

  EstimationResult result;
  result.num_environments = covs.num_environments;

  auto targets = staged("targets", [&] { return reconstruct_targets(covs, th.rho); });
  result.targets_hat = targets.targets;
  result.patterns_hat = targets.table.node_patterns;
  auto& diag = result.diagnostics;
  diag.count_margins.assign(targets.count_margins.begin() + 1, targets.count_margins.end());
  diag.min_count_margin = diag.count_margins.empty()
                              ? 0.0
                              : *std::min_element(diag.count_margins.begin(), diag.count_margins.end());

  auto decoder = staged("decoder", [&] { return estimate_decoder(covs, targets.table, th.rho); });
  result.decoder_hat = std::move(decoder.decoder);
  diag.decoder_multiplicity = std::move(decoder.multiplicity);
  diag.decoder_flagged = decoder.flagged;

  auto latent = staged("latent-covariances",
                       [&] { return recover_latent_covs(result.decoder_hat, covs); });
  {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(latent.second, Eigen::EigenvaluesOnly);
    diag.latent_cov_min_eig = es.eigenvalues().size() ? es.eigenvalues()(0) : 0.0;
    diag.pd_floor_hit = diag.latent_cov_min_eig < th.pd_floor;
  }

  auto graph = staged("graph", [&] { return estimate_graph(latent.first, latent.second, th); });
  result.pencil_vectors = std::move(graph.pencil_vectors);
  result.pencil_eigenvalues = std::move(graph.eigenvalues);
  result.graph_hat = std::move(graph.graph);
  diag.alpha_used = graph.alpha;
  diag.acyclic = graph.acyclic;
  diag.pencil_min_gap = graph.min_relative_gap;
  diag.pencil_collision = graph.min_relative_gap < 1e-8;
  diag.alpha_repaired = graph.alpha_repaired;
  diag.graph_repaired = std::move(graph.graph_repaired);
  return result;
}

EstimationResult run_pipeline(const EnvironmentDataset& data, const EstimatorConfig& config) {
  auto covs = staged("covariances", [&] {
    config.thresholds.validate();
    return empirical_covariances(data, config.thresholds.rank_rel_tol, config.center);
  });
  return run_pipeline(covs, config);
}

}  // namespace crl
