#include "crl/eval.hpp"

#include <algorithm>
#include <cmath>

#include "crl/assignment.hpp"

namespace crl {

namespace {

void require_same_shape(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::InvalidInput, "decoder shapes differ: " + std::to_string(a.rows()) +
                                             "x" + std::to_string(a.cols()) + " vs " +
                                             std::to_string(b.rows()) + "x" +
                                             std::to_string(b.cols()));
  }
}

}  // namespace

Alignment align(const MatrixXd& decoder_hat, const MatrixXd& decoder) {
  require_same_shape(decoder_hat, decoder);
  const Index d = decoder.cols();
  const VectorXd hat_norms = decoder_hat.colwise().norm();
  const VectorXd norms = decoder.colwise().norm();
  MatrixXd cosines(d, d);
  for (Index m = 0; m < d; ++m) {
    for (Index j = 0; j < d; ++j) {
      const double denom = hat_norms(m) * norms(j);
      cosines(m, j) = denom > 0.0 ? std::abs(decoder_hat.col(m).dot(decoder.col(j))) / denom : 0.0;
    }
  }
  Alignment out;
  out.perm = max_weight_assignment(cosines);
  out.scales.resize(d);
  for (Index m = 0; m < d; ++m) {
    const Index j = out.perm[static_cast<std::size_t>(m)];
    out.scales(m) = decoder.col(j).dot(decoder_hat.col(m)) / decoder.col(j).squaredNorm();
  }
  return out;
}

double decoder_error(const MatrixXd& decoder_hat, const MatrixXd& decoder,
                     const Alignment& alignment, bool positive_only) {
  require_same_shape(decoder_hat, decoder);
  const Index d = decoder.cols();
  if (d == 0) return 0.0;
  double sq = 0.0;
  for (Index m = 0; m < d; ++m) {
    const Index j = alignment.perm.at(static_cast<std::size_t>(m));
    const double s = positive_only ? std::max(0.0, alignment.scales(m)) : alignment.scales(m);
    sq += (decoder_hat.col(m) - s * decoder.col(j)).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(d));
}

double max_angle_error(const MatrixXd& decoder_hat, const MatrixXd& decoder,
                       const Alignment& alignment) {
  require_same_shape(decoder_hat, decoder);
  double worst = 0.0;
  for (Index m = 0; m < decoder.cols(); ++m) {
    const Index j = alignment.perm.at(static_cast<std::size_t>(m));
    const auto a = decoder_hat.col(m);
    const auto b = decoder.col(j);
    // atan2 of |a×b| and |a·b| stays accurate for tiny angles, unlike acos.
    const double dot = std::abs(a.dot(b));
    const double cross = (a * b.squaredNorm() - b * a.dot(b)).norm() / b.norm();
    worst = std::max(worst, std::atan2(cross, dot));
  }
  return worst;
}

GraphMetrics graph_metrics(const Adjacency& graph_hat, const Adjacency& graph,
                           std::span<const int> perm) {
  const Index d = graph.rows();
  if (graph_hat.rows() != d || graph_hat.cols() != d || graph.cols() != d ||
      static_cast<Index>(perm.size()) != d) {
    throw Error(ErrorKind::InvalidInput, "graph sizes differ");
  }
  Adjacency relabeled = Adjacency::Constant(d, d, false);
  for (Index a = 0; a < d; ++a) {
    for (Index b = 0; b < d; ++b) {
      if (graph_hat(a, b)) relabeled(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]) = true;
    }
  }
  GraphMetrics out;
  for (Index a = 0; a < d; ++a) {
    for (Index b = 0; b < d; ++b) {
      if (a != b && relabeled(a, b) != graph(a, b)) ++out.shd;
    }
  }
  out.exact = out.shd == 0;
  return out;
}

std::vector<bool> target_metrics(const std::vector<NodeSet>& targets_hat,
                                 const std::vector<NodeSet>& targets, std::span<const int> perm) {
  if (targets_hat.size() != targets.size()) {
    throw Error(ErrorKind::InvalidInput, "number of environments differs");
  }
  std::vector<bool> out;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    NodeSet relabeled;
    for (int j : targets_hat[k]) {
      if (j < 0 || static_cast<std::size_t>(j) >= perm.size()) {
        throw Error(ErrorKind::InvalidInput, "estimated target label out of range");
      }
      relabeled.push_back(perm[static_cast<std::size_t>(j)]);
    }
    std::sort(relabeled.begin(), relabeled.end());
    out.push_back(relabeled == targets[k]);
  }
  return out;
}

VectorXd pencil_eigenvalues(const SemParameters& sem) {
  return sem.scale_ratios().array().square();
}

EvaluationReport evaluate(const EstimationResult& result, const GroundTruth& truth) {
  if (result.latent_dim() != truth.latent_dim()) {
    throw Error(ErrorKind::InvalidInput,
                "estimated latent dimension " + std::to_string(result.latent_dim()) +
                    " differs from true " + std::to_string(truth.latent_dim()));
  }
  if (result.num_environments != truth.design.num_environments()) {
    throw Error(ErrorKind::InvalidInput, "number of environments differs");
  }
  EvaluationReport report;
  report.alignment = align(result.decoder_hat, truth.decoder);
  const auto& perm = report.alignment.perm;
  report.decoder_error = decoder_error(result.decoder_hat, truth.decoder, report.alignment);
  report.decoder_error_positive =
      decoder_error(result.decoder_hat, truth.decoder, report.alignment, true);
  report.max_angle_error = max_angle_error(result.decoder_hat, truth.decoder, report.alignment);

  report.targets_exact_per_k = target_metrics(result.targets_hat, truth.design.targets(), perm);
  report.targets_exact = std::all_of(report.targets_exact_per_k.begin(),
                                     report.targets_exact_per_k.end(), [](bool b) { return b; });

  const auto graph = graph_metrics(result.graph_hat, truth.sem.graph(), perm);
  report.graph_shd = graph.shd;
  report.graph_exact = graph.exact;

  const VectorXd truth_eigs = pencil_eigenvalues(truth.sem);
  for (Index m = 0; m < result.pencil_eigenvalues.size(); ++m) {
    report.pencil_eigenvalue_error =
        std::max(report.pencil_eigenvalue_error,
                 std::abs(result.pencil_eigenvalues(m) - truth_eigs(perm[static_cast<std::size_t>(m)])));
  }
  return report;
}

RateFit fit_rate(std::span<const double> ns, std::span<const double> errs) {
  if (ns.size() != errs.size() || ns.size() < 3) {
    throw Error(ErrorKind::InvalidInput, "rate fit needs at least 3 matched points");
  }
  const std::size_t m = ns.size();
  VectorXd x(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(ns[i] > 0.0) || !(errs[i] > 0.0)) {
      throw Error(ErrorKind::InvalidInput, "rate fit needs positive sample sizes and errors");
    }
    x(static_cast<Index>(i)) = std::log(ns[i]);
    y(static_cast<Index>(i)) = std::log(errs[i]);
  }
  const double mx = x.mean();
  const double my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  if (sxx <= 0.0) throw Error(ErrorKind::InvalidInput, "rate fit needs distinct sample sizes");
  RateFit fit;
  fit.slope = ((x.array() - mx) * (y.array() - my)).sum() / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

}  // namespace crl
