#pragma once

// Experiment configuration: one JSON document with sections
//   generation, estimation, sweep, oracle, output
// Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "crl/estimators.hpp"
#include "crl/synth.hpp"

namespace crl {

struct SweepConfig {
  std::vector<Index> n_grid{4000, 16000, 64000};  // samples per (k, ℓ)
  int replicates = 20;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct OracleConfig {
  int instances = 25;
  std::vector<int> latent_dims{3, 5, 8};
  int observed_factor = 6;  // p = observed_factor · d
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  GenConfig generation;
  Index samples_per_env = 10000;  // used by `generate`
  EstimatorConfig estimation;
  SweepConfig sweep;
  OracleConfig oracle;
  std::string output_dir = "out";

  nlohmann::json to_json() const;
  /// Throws InvalidInput naming the offending key.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace crl
