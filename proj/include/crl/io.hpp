#pragma once

// Persistence. Sample matrices are raw little-endian float64 files with a
// 16-byte header:
//
//   bytes 0..3    magic "CRLM"
//   bytes 4..7    u32 rows
//   bytes 8..11   u32 cols
//   bytes 12..15  u32 reserved (0)
//   then rows*cols float64, row-major
//
// Structured data (manifests, ground truth, results, reports) is JSON.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "crl/eval.hpp"
#include "crl/model.hpp"

namespace crl::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kResultSchemaVersion = 1;
inline constexpr int kTruthSchemaVersion = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 16;

std::vector<std::uint8_t> encode_matrix(const MatrixXd& m);
MatrixXd decode_matrix(const std::vector<std::uint8_t>& bytes, const std::string& context = {});

std::vector<std::uint8_t> read_bytes(const fs::path& path);
void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

std::uint32_t checksum(const std::vector<std::uint8_t>& bytes);

struct ManifestEntry {
  int k = 0;
  int ell = 1;
  std::string file;
  std::uint64_t rows = 0;
  std::uint32_t crc32 = 0;
};

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  Index observed_dim = 0;
  int num_environments = 0;
  std::optional<Index> latent_dim;
  std::vector<ManifestEntry> entries;
  std::optional<std::string> ground_truth;  // file name relative to the dataset dir
  json generation = json::object();

  json to_json() const;
  static DatasetManifest from_json(const json& j);
};

inline constexpr const char* kManifestName = "manifest.json";

/// Writes one matrix file per (k, ℓ) and manifest.json into `dir`.
DatasetManifest write_dataset(const EnvironmentDataset& data, const fs::path& dir,
                              std::optional<std::string> ground_truth_file = std::nullopt,
                              json generation = json::object());

struct LoadedDataset {
  EnvironmentDataset data;
  DatasetManifest manifest;
};

/// Reads and checksum-verifies a dataset directory.
LoadedDataset read_dataset(const fs::path& dir);

json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const json& j);
json adjacency_to_json(const Adjacency& g);
Adjacency adjacency_from_json(const json& j);

json ground_truth_to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const json& j);
void write_ground_truth(const GroundTruth& truth, const fs::path& path);
GroundTruth read_ground_truth(const fs::path& path);

json report_to_json(const EvaluationReport& report);

/// Result document; NaN or infinite numbers become null and set
/// "nonfinite_values": true.
json results_to_json(const EstimationResult& result, const EvaluationReport* report = nullptr);
EstimationResult results_from_json(const json& j);
void write_results(const EstimationResult& result, const EvaluationReport* report,
                   const fs::path& path);
EstimationResult read_results(const fs::path& path);

/// Parses a JSON file, mapping IO and syntax errors to crl::Error.
json read_json(const fs::path& path);

}  // namespace crl::io
