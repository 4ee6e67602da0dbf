#include "crl/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

namespace crl {

std::string to_string(NoiseDistribution dist) {
  switch (dist) {
    case NoiseDistribution::Gaussian: return "gaussian";
    case NoiseDistribution::Uniform: return "uniform";
    case NoiseDistribution::RademacherMixture: return "rademacher-mixture";
  }
  return "gaussian";
}

NoiseDistribution parse_noise_distribution(const std::string& name) {
  if (name == "gaussian") return NoiseDistribution::Gaussian;
  if (name == "uniform") return NoiseDistribution::Uniform;
  if (name == "rademacher-mixture") return NoiseDistribution::RademacherMixture;
  throw Error(ErrorKind::InvalidInput, "unknown noise distribution '" + name + "'");
}

void GenConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidInput, msg); };
  if (latent_dim < 2) fail("latent dimension d must be at least 2");
  if (observed_dim < latent_dim) fail("observed dimension p must be at least d");
  if (num_environments < 0 || num_environments > kMaxEnvironments) fail("K out of range");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) fail("edge_prob must lie in [0,1]");
  if (!(a_min > 0.0 && a_max >= a_min)) fail("need 0 < a_min <= a_max");
  for (const auto& r : {scale_1, scale_2}) {
    if (!(r.lo > 0.0 && r.hi >= r.lo)) fail("noise scale ranges need 0 < lo <= hi");
  }
  if (!(ratio_gap >= 0.0)) fail("ratio_gap must be nonnegative");
  if (decoder && (decoder->rows() != observed_dim || decoder->cols() != latent_dim)) {
    fail("supplied decoder has the wrong shape");
  }
}

namespace {

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t c = 1;
  for (int i = 1; i <= k; ++i) c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return c;
}

double draw_base(NoiseDistribution dist, SeededRng& rng, std::normal_distribution<double>& normal) {
  switch (dist) {
    case NoiseDistribution::Gaussian:
      return normal(rng);
    case NoiseDistribution::Uniform:
      return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    case NoiseDistribution::RademacherMixture: {
      // ±0.8 plus N(0, 0.36): bimodal, unit variance
      const double sign = (rng() >> 63) ? 1.0 : -1.0;
      return 0.8 * sign + 0.6 * normal(rng);
    }
  }
  return 0.0;
}

}  // namespace

int auto_num_environments(int latent_dim) {
  int k = 1;
  while (binomial(k, k / 2) < static_cast<std::uint64_t>(latent_dim)) ++k;
  return k;
}

Adjacency sample_dag(const GenConfig& cfg, SeededRng& rng) {
  const int d = cfg.latent_dim;
  std::vector<int> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  Adjacency adj = Adjacency::Constant(d, d, false);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (rng.uniform() < cfg.edge_prob) adj(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) = true;
    }
  }
  if (cfg.max_in_degree >= 0) {
    for (int v = 0; v < d; ++v) {
      std::vector<int> parents;
      for (int u = 0; u < d; ++u) {
        if (adj(u, v)) parents.push_back(u);
      }
      if (static_cast<int>(parents.size()) <= cfg.max_in_degree) continue;
      std::shuffle(parents.begin(), parents.end(), rng);
      for (std::size_t i = static_cast<std::size_t>(cfg.max_in_degree); i < parents.size(); ++i) {
        adj(parents[i], v) = false;
      }
    }
  }
  return adj;
}

MatrixXd sample_weights(const Adjacency& pattern, double a_min, double a_max, SeededRng& rng) {
  MatrixXd a = MatrixXd::Zero(pattern.rows(), pattern.cols());
  for (Index v = 0; v < pattern.cols(); ++v) {
    for (Index u = 0; u < pattern.rows(); ++u) {
      if (!pattern(u, v)) continue;
      const double magnitude = a_min + (a_max - a_min) * rng.uniform();
      a(u, v) = (rng() >> 63) ? magnitude : -magnitude;
    }
  }
  return a;
}

InterventionDesign make_sss_design(int latent_dim, int num_environments) {
  const int half = num_environments / 2;
  if (num_environments < 1 || num_environments > kMaxEnvironments ||
      binomial(num_environments, half) < static_cast<std::uint64_t>(latent_dim)) {
    throw Error(ErrorKind::DesignInfeasible,
                "C(" + std::to_string(num_environments) + "," + std::to_string(half) +
                    ") < d = " + std::to_string(latent_dim));
  }
  // Increasing integer order of equal-weight masks is colex order.
  std::vector<EnvMask> codewords;
  for (EnvMask m = 0; codewords.size() < static_cast<std::size_t>(latent_dim); ++m) {
    if (std::popcount(m) == half) codewords.push_back(m);
  }
  std::vector<NodeSet> targets(static_cast<std::size_t>(num_environments));
  for (int k = 1; k <= num_environments; ++k) {
    for (int j = 0; j < latent_dim; ++j) {
      if (!env_in(codewords[static_cast<std::size_t>(j)], k)) {
        targets[static_cast<std::size_t>(k - 1)].push_back(j);
      }
    }
  }
  return InterventionDesign(latent_dim, std::move(targets));
}

std::array<VectorXd, 2> sample_noise_scales(int latent_dim, const ScaleRange& range_1,
                                            const ScaleRange& range_2, double ratio_gap,
                                            SeededRng& rng) {
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::array<VectorXd, 2> scales{VectorXd(latent_dim), VectorXd(latent_dim)};
    for (int j = 0; j < latent_dim; ++j) {
      scales[0](j) = range_1.lo + (range_1.hi - range_1.lo) * rng.uniform();
      scales[1](j) = range_2.lo + (range_2.hi - range_2.lo) * rng.uniform();
    }
    if (min_pairwise_gap(scales[0].cwiseQuotient(scales[1])) >= ratio_gap) return scales;
  }
  throw Error(ErrorKind::GenerationFailed,
              "could not separate noise ratios by " + std::to_string(ratio_gap) + " after " +
                  std::to_string(kMaxAttempts) + " attempts");
}

IntervenedSem intervened_parameters(const SemParameters& sem, const NodeSet& targets) {
  IntervenedSem out;
  out.weights = sem.weights();
  out.noise_scales = {sem.noise_scales(1), sem.noise_scales(2)};
  out.pinned.assign(static_cast<std::size_t>(sem.dim()), false);
  for (int j : targets) {
    out.weights.col(j).setZero();
    out.noise_scales[0](j) = 0.0;
    out.noise_scales[1](j) = 0.0;
    out.pinned[static_cast<std::size_t>(j)] = true;
  }
  return out;
}

MatrixXd latent_covariance(const SemParameters& sem, const NodeSet& targets, int ell) {
  const auto env = intervened_parameters(sem, targets);
  const Index d = sem.dim();
  const MatrixXd mix =
      (MatrixXd::Identity(d, d) - env.weights.transpose()).partialPivLu().inverse();
  const VectorXd variances = env.noise_scales[static_cast<std::size_t>(ell - 1)].array().square();
  MatrixXd sigma = mix * variances.asDiagonal() * mix.transpose();
  linalg::mirror_upper(sigma);
  return sigma;
}

MatrixXd simulate_environment(const GroundTruth& truth, int k, int ell, Index n, SeededRng& rng,
                              NoiseDistribution noise) {
  if (n < 1) throw Error(ErrorKind::InvalidInput, "sample count must be positive");
  const auto env = intervened_parameters(truth.sem, truth.design.targets(k));
  const Index d = truth.sem.dim();
  const VectorXd& scales = env.noise_scales[static_cast<std::size_t>(ell - 1)];

  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd z(n, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < n; ++i) z(i, j) = draw_base(noise, rng, normal);
  }
  // Back-substitution in topological order: Z_v = ν_v + Σ_u a_uv Z_u.
  for (int v : truth.sem.order()) {
    if (env.pinned[static_cast<std::size_t>(v)]) {
      z.col(v).setZero();
      continue;
    }
    z.col(v) *= scales(v);
    for (Index u = 0; u < d; ++u) {
      const double a = env.weights(u, v);
      if (a != 0.0) z.col(v) += a * z.col(u);
    }
  }
  return z * truth.decoder.transpose();
}

CovarianceSet exact_covariances(const GroundTruth& truth, double rank_rel_tol) {
  std::map<EnvKey, MatrixXd> covs;
  const int big_k = truth.design.num_environments();
  for (int k = 0; k <= big_k; ++k) {
    for (int ell = 1; ell <= 2; ++ell) {
      MatrixXd sigma = truth.decoder * latent_covariance(truth.sem, truth.design.targets(k), ell) *
                       truth.decoder.transpose();
      linalg::mirror_upper(sigma);
      covs.emplace(EnvKey{k, ell}, std::move(sigma));
    }
  }
  return CovarianceSet::from_covariances(truth.observed_dim(), big_k, std::move(covs),
                                         rank_rel_tol);
}

GroundTruth generate_ground_truth(const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int d = cfg.latent_dim;
  const int big_k = cfg.num_environments > 0 ? cfg.num_environments : auto_num_environments(d);
  auto design = make_sss_design(d, big_k);

  SeededRng dag_rng(seed, "dag");
  SeededRng weight_rng(seed, "weights");
  SeededRng scale_rng(seed, "noise-scales");
  SeededRng decoder_rng(seed, "decoder");

  const Adjacency pattern = sample_dag(cfg, dag_rng);
  MatrixXd weights = sample_weights(pattern, cfg.a_min, cfg.a_max, weight_rng);
  auto scales = sample_noise_scales(d, cfg.scale_1, cfg.scale_2, cfg.ratio_gap, scale_rng);

  MatrixXd decoder;
  if (cfg.decoder) {
    decoder = *cfg.decoder;
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    decoder.resize(cfg.observed_dim, d);
    for (Index j = 0; j < d; ++j) {
      for (Index i = 0; i < cfg.observed_dim; ++i) decoder(i, j) = normal(decoder_rng);
    }
  }
  return GroundTruth(SemParameters(std::move(weights), std::move(scales[0]), std::move(scales[1])),
                     std::move(decoder), std::move(design));
}

EnvironmentDataset simulate_dataset(const GroundTruth& truth, Index n_per_env, std::uint64_t seed,
                                    NoiseDistribution noise) {
  EnvironmentDataset data;
  data.observed_dim = truth.observed_dim();
  data.latent_dim = truth.latent_dim();
  for (int k = 0; k <= truth.design.num_environments(); ++k) {
    for (int ell = 1; ell <= 2; ++ell) {
      SeededRng rng(seed, "samples",
                    {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(ell)});
      data.add(EnvKey{k, ell}, simulate_environment(truth, k, ell, n_per_env, rng, noise));
    }
  }
  data.num_environments = truth.design.num_environments();
  return data;
}

}  // namespace crl
