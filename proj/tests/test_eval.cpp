#include "doctest.h"

#include <cmath>

#include "crl/estimators.hpp"
#include "crl/eval.hpp"
#include "crl/synth.hpp"
#include "oracles.hpp"

using namespace crl;

TEST_CASE("align recovers permutation and scale") {
  const MatrixXd b = oracle::gaussian_matrix(12, 4, 1);
  const auto same = align(b, b);
  CHECK(same.perm == std::vector<int>{0, 1, 2, 3});
  CHECK((same.scales.array() - 1.0).abs().maxCoeff() < 1e-14);

  MatrixXd swapped = b;
  swapped.col(0) = b.col(1);
  swapped.col(1) = -b.col(0);
  const auto s = align(swapped, b);
  CHECK(s.perm == std::vector<int>{1, 0, 2, 3});
  CHECK(s.scales(0) == doctest::Approx(1.0));
  CHECK(s.scales(1) == doctest::Approx(-1.0));

  // B̂ = B·P·D for a random permutation P and diagonal D.
  const std::vector<int> perm{2, 0, 3, 1};
  const Eigen::Vector4d scale(0.3, -2.0, 1.7, -0.01);
  MatrixXd hat(12, 4);
  for (Index m = 0; m < 4; ++m) hat.col(m) = scale(m) * b.col(perm[static_cast<std::size_t>(m)]);
  const auto a = align(hat, b);
  CHECK(a.perm == perm);
  CHECK(decoder_error(hat, b, a) < 1e-10);
}

TEST_CASE("decoder_error") {
  const MatrixXd b = oracle::gaussian_matrix(8, 3, 4);
  const auto id = align(b, b);
  CHECK(decoder_error(b, b, id) == 0.0);

  // Column 0 replaced by a vector orthogonal to everything in B.
  MatrixXd hat = b;
  const Eigen::HouseholderQR<MatrixXd> qr(b);
  const VectorXd orth = MatrixXd(qr.householderQ()).col(5) * 2.5;
  hat.col(0) = orth;
  Alignment fixed{{0, 1, 2}, Eigen::Vector3d(0.0, 1.0, 1.0)};
  CHECK(decoder_error(hat, b, fixed) == doctest::Approx(orth.norm() / std::sqrt(3.0)));

  const GroundTruth truth = generate_ground_truth(GenConfig{}, 3);
  const auto result = run_pipeline(exact_covariances(truth), EstimatorConfig{});
  CHECK(evaluate(result, truth).decoder_error < 1e-8);
}

TEST_CASE("graph_metrics") {
  Adjacency g = Adjacency::Constant(3, 3, false);
  g(0, 1) = true;
  g(1, 2) = true;
  const std::vector<int> id{0, 1, 2};
  CHECK(graph_metrics(g, g, id).shd == 0);
  CHECK(graph_metrics(g, g, id).exact);

  Adjacency missing = g;
  missing(1, 2) = false;
  CHECK(graph_metrics(missing, g, id).shd == 1);
  CHECK_FALSE(graph_metrics(missing, g, id).exact);

  Adjacency reversed = g;
  reversed(0, 1) = false;
  reversed(1, 0) = true;
  CHECK(graph_metrics(reversed, g, id).shd == 2);

  // Relabeled estimate: estimated node m is true node perm[m].
  const std::vector<int> perm{2, 0, 1};
  Adjacency relabeled = Adjacency::Constant(3, 3, false);
  relabeled(1, 2) = true;  // true 0 -> 1
  relabeled(2, 0) = true;  // true 1 -> 2
  CHECK(graph_metrics(relabeled, g, perm).exact);
}

TEST_CASE("target_metrics") {
  const std::vector<NodeSet> truth{{1, 2}, {0, 2}, {0, 1}};
  const std::vector<int> id{0, 1, 2};
  for (bool b : target_metrics(truth, truth, id)) CHECK(b);

  // Node 0 and node 1 swapped in the first two sets only.
  const std::vector<NodeSet> wrong{{0, 2}, {1, 2}, {0, 1}};
  const auto flags = target_metrics(wrong, truth, id);
  CHECK(flags == std::vector<bool>{false, false, true});

  CHECK(target_metrics({}, {}, std::vector<int>{}).empty());
}

TEST_CASE("fit_rate") {
  const std::vector<double> ns{1e3, 4e3, 1.6e4, 6.4e4};
  std::vector<double> errs;
  for (double n : ns) errs.push_back(3.0 / std::sqrt(n));
  const auto fit = fit_rate(ns, errs);
  CHECK(std::abs(fit.slope + 0.5) < 1e-12);
  CHECK(std::abs(fit.intercept - std::log(3.0)) < 1e-10);

  const std::vector<double> flat(4, 0.2);
  CHECK(std::abs(fit_rate(ns, flat).slope) < 1e-12);

  CHECK_THROWS_AS(fit_rate(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS(fit_rate(ns, std::vector<double>{1, 0, 1, 1}), Error);
}

TEST_CASE("evaluate is label-invariant") {
  const GroundTruth truth = generate_ground_truth(GenConfig{}, 9);
  EstimationResult result = run_pipeline(exact_covariances(truth), EstimatorConfig{});

  // Reverse the estimated labels everywhere.
  const Index d = result.latent_dim();
  std::vector<int> rev(static_cast<std::size_t>(d));
  for (Index m = 0; m < d; ++m) rev[static_cast<std::size_t>(m)] = static_cast<int>(d - 1 - m);
  EstimationResult permuted = result;
  for (Index m = 0; m < d; ++m) {
    const int r = rev[static_cast<std::size_t>(m)];
    permuted.decoder_hat.col(r) = result.decoder_hat.col(m);
    permuted.pencil_eigenvalues(r) = result.pencil_eigenvalues(m);
    for (Index n = 0; n < d; ++n) {
      permuted.graph_hat(r, rev[static_cast<std::size_t>(n)]) = result.graph_hat(m, n);
    }
  }
  for (auto& t : permuted.targets_hat) {
    for (int& j : t) j = rev[static_cast<std::size_t>(j)];
    std::sort(t.begin(), t.end());
  }
  const auto a = evaluate(result, truth);
  const auto b = evaluate(permuted, truth);
  CHECK(a.targets_exact);
  CHECK(b.targets_exact);
  CHECK(b.graph_exact);
  CHECK(b.decoder_error < 1e-8);
  CHECK(b.pencil_eigenvalue_error < 1e-8);

  EstimationResult shrunk = result;
  shrunk.decoder_hat = result.decoder_hat.leftCols(d - 1);
  CHECK_THROWS_AS(evaluate(shrunk, truth), Error);
}
