#include "crl/io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace crl::io {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'R', 'L', 'M'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

double number_or_nan(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

// Replaces non-finite floats by null; returns whether any were found.
bool scrub_nonfinite(json& j) {
  bool found = false;
  if (j.is_number_float()) {
    if (!std::isfinite(j.get<double>())) {
      j = nullptr;
      found = true;
    }
  } else if (j.is_structured()) {
    for (auto& child : j) found = scrub_nonfinite(child) || found;
  }
  return found;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const json& j) {
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number_or_nan(j[i]);
  return v;
}

json mask_to_json(EnvMask mask, int num_environments) {
  json out = json::array();
  for (int k = 1; k <= num_environments; ++k) {
    if (env_in(mask, k)) out.push_back(k);
  }
  return out;
}

std::string entry_file_name(int k, int ell) {
  return "env_" + std::to_string(k) + "_" + std::to_string(ell) + ".bin";
}

void require_schema(const json& j, const char* schema, int version) {
  if (!j.is_object() || j.value("schema", std::string()) != schema) {
    throw Error(ErrorKind::InvalidInput, std::string("document is not a ") + schema);
  }
  if (j.value("schema_version", -1) != version) {
    throw Error(ErrorKind::UnsupportedVersion,
                std::string("unsupported ") + schema + " schema version");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_matrix(const MatrixXd& m) {
  if (m.rows() < 1) throw Error(ErrorKind::InvalidInput, "refusing to encode a matrix with no rows");
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::InvalidInput, "matrix too large for the binary format");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(kMatrixHeaderBytes + static_cast<std::size_t>(m.size()) * 8);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  put_u32(out, 0);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

MatrixXd decode_matrix(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  auto corrupt = [&](const std::string& why) {
    return Error(ErrorKind::CorruptDataset, (context.empty() ? "" : context + ": ") + why);
  };
  if (bytes.size() < kMatrixHeaderBytes) throw corrupt("file shorter than header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw corrupt("bad magic");
  const std::uint64_t rows = get_u32(bytes, 4);
  const std::uint64_t cols = get_u32(bytes, 8);
  if (rows == 0) throw corrupt("matrix has no rows");
  if (bytes.size() != kMatrixHeaderBytes + rows * cols * 8) throw corrupt("size does not match header");
  MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t at = kMatrixHeaderBytes;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[at++]) << (8 * b);
      m(i, j) = std::bit_cast<double>(bits);
    }
  }
  return m;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::uint32_t checksum(const std::vector<std::uint8_t>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidInput, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

json DatasetManifest::to_json() const {
  json j;
  j["format_version"] = format_version;
  j["p"] = observed_dim;
  j["K"] = num_environments;
  if (latent_dim) j["d"] = *latent_dim;
  json entries_json = json::array();
  for (const auto& e : entries) {
    entries_json.push_back(
        {{"k", e.k}, {"ell", e.ell}, {"file", e.file}, {"rows", e.rows}, {"crc32", e.crc32}});
  }
  j["entries"] = std::move(entries_json);
  if (ground_truth) j["ground_truth"] = *ground_truth;
  j["generation"] = generation;
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  try {
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kDatasetFormatVersion) {
      throw Error(ErrorKind::UnsupportedVersion,
                  "dataset format version " + std::to_string(m.format_version));
    }
    m.observed_dim = j.at("p").get<Index>();
    m.num_environments = j.at("K").get<int>();
    if (j.contains("d")) m.latent_dim = j.at("d").get<Index>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("k").get<int>(), e.at("ell").get<int>(),
                           e.at("file").get<std::string>(), e.at("rows").get<std::uint64_t>(),
                           e.at("crc32").get<std::uint32_t>()});
    }
    if (j.contains("ground_truth")) m.ground_truth = j.at("ground_truth").get<std::string>();
    if (j.contains("generation")) m.generation = j.at("generation");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptDataset, std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest write_dataset(const EnvironmentDataset& data, const fs::path& dir,
                              std::optional<std::string> ground_truth_file, json generation) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.observed_dim = data.observed_dim;
  manifest.num_environments = data.num_environments;
  manifest.latent_dim = data.latent_dim;
  manifest.ground_truth = std::move(ground_truth_file);
  manifest.generation = std::move(generation);
  for (const auto& [key, x] : data.samples) {
    const auto bytes = encode_matrix(x);
    const std::string name = entry_file_name(key.k, key.ell);
    write_bytes(dir / name, bytes);
    manifest.entries.push_back(
        {key.k, key.ell, name, static_cast<std::uint64_t>(x.rows()), checksum(bytes)});
  }
  write_text(dir / kManifestName, manifest.to_json().dump(2) + "\n");
  return manifest;
}

LoadedDataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorKind::Io, "missing manifest " + manifest_path.string());
  }
  LoadedDataset out;
  out.manifest = DatasetManifest::from_json(read_json(manifest_path));
  out.data.observed_dim = out.manifest.observed_dim;
  out.data.latent_dim = out.manifest.latent_dim;
  for (const auto& e : out.manifest.entries) {
    const fs::path path = dir / e.file;
    const auto bytes = read_bytes(path);
    if (checksum(bytes) != e.crc32) {
      throw Error(ErrorKind::CorruptDataset, "checksum mismatch for " + path.string());
    }
    MatrixXd x = decode_matrix(bytes, path.string());
    if (static_cast<std::uint64_t>(x.rows()) != e.rows || x.cols() != out.manifest.observed_dim) {
      throw Error(ErrorKind::CorruptDataset, "shape disagrees with manifest for " + path.string());
    }
    out.data.add(EnvKey{e.k, e.ell}, std::move(x));
  }
  out.data.num_environments = out.manifest.num_environments;
  return out;
}

// ---------------------------------------------------------------------------

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Index>(j.size());
  const auto cols = rows ? static_cast<Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != cols) {
      throw Error(ErrorKind::InvalidInput, "ragged matrix in JSON");
    }
    for (Index c = 0; c < cols; ++c) m(i, c) = number_or_nan(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

json adjacency_to_json(const Adjacency& g) {
  json rows = json::array();
  for (Index i = 0; i < g.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < g.cols(); ++j) row.push_back(g(i, j) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

Adjacency adjacency_from_json(const json& j) {
  const auto rows = static_cast<Index>(j.size());
  const auto cols = rows ? static_cast<Index>(j[0].size()) : 0;
  Adjacency g(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index c = 0; c < cols; ++c) {
      g(i, c) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<int>() != 0;
    }
  }
  return g;
}

json ground_truth_to_json(const GroundTruth& truth) {
  json j;
  j["schema"] = "crl.ground-truth";
  j["schema_version"] = kTruthSchemaVersion;
  j["weights"] = matrix_to_json(truth.sem.weights());
  j["noise_scales"] = {vector_to_json(truth.sem.noise_scales(1)),
                       vector_to_json(truth.sem.noise_scales(2))};
  j["decoder"] = matrix_to_json(truth.decoder);
  j["targets"] = truth.design.targets();
  return j;
}

GroundTruth ground_truth_from_json(const json& j) {
  require_schema(j, "crl.ground-truth", kTruthSchemaVersion);
  try {
    MatrixXd weights = matrix_from_json(j.at("weights"));
    const auto& scales = j.at("noise_scales");
    SemParameters sem(std::move(weights), vector_from_json(scales.at(0)),
                      vector_from_json(scales.at(1)));
    auto targets = j.at("targets").get<std::vector<NodeSet>>();
    const int d = static_cast<int>(sem.dim());
    // Stored designs may be deliberately non-separating; validation reports it.
    return GroundTruth(std::move(sem), matrix_from_json(j.at("decoder")),
                       InterventionDesign::unchecked(d, std::move(targets)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed ground truth: ") + e.what());
  }
}

void write_ground_truth(const GroundTruth& truth, const fs::path& path) {
  write_text(path, ground_truth_to_json(truth).dump(2) + "\n");
}

GroundTruth read_ground_truth(const fs::path& path) { return ground_truth_from_json(read_json(path)); }

json report_to_json(const EvaluationReport& report) {
  json j;
  j["perm"] = report.alignment.perm;
  j["scales"] = vector_to_json(report.alignment.scales);
  j["decoder_error"] = report.decoder_error;
  j["decoder_error_positive"] = report.decoder_error_positive;
  j["max_angle_error"] = report.max_angle_error;
  j["targets_exact_per_k"] = report.targets_exact_per_k;
  j["targets_exact"] = report.targets_exact;
  j["graph_shd"] = report.graph_shd;
  j["graph_exact"] = report.graph_exact;
  j["pencil_eigenvalue_error"] = report.pencil_eigenvalue_error;
  return j;
}

json results_to_json(const EstimationResult& result, const EvaluationReport* report) {
  json j;
  j["schema"] = "crl.estimation-result";
  j["schema_version"] = kResultSchemaVersion;
  j["num_environments"] = result.num_environments;
  j["latent_dim"] = result.latent_dim();
  j["targets_hat"] = result.targets_hat;
  json patterns = json::array();
  for (EnvMask m : result.patterns_hat) patterns.push_back(mask_to_json(m, result.num_environments));
  j["patterns_hat"] = std::move(patterns);
  j["decoder_hat"] = matrix_to_json(result.decoder_hat);
  j["pencil_vectors"] = matrix_to_json(result.pencil_vectors);
  j["graph_hat"] = adjacency_to_json(result.graph_hat);
  j["pencil_eigenvalues"] = vector_to_json(result.pencil_eigenvalues);

  const auto& d = result.diagnostics;
  json diag;
  diag["count_margins"] = d.count_margins;
  diag["min_count_margin"] = d.min_count_margin;
  diag["decoder_multiplicity"] = d.decoder_multiplicity;
  diag["decoder_flagged"] = d.decoder_flagged;
  diag["pencil_min_gap"] = d.pencil_min_gap;
  diag["pencil_collision"] = d.pencil_collision;
  diag["latent_cov_min_eig"] = d.latent_cov_min_eig;
  diag["pd_floor_hit"] = d.pd_floor_hit;
  diag["alpha_used"] = d.alpha_used;
  diag["acyclic"] = d.acyclic;
  if (d.alpha_repaired) diag["alpha_repaired"] = *d.alpha_repaired;
  if (d.graph_repaired) diag["graph_repaired"] = adjacency_to_json(*d.graph_repaired);
  j["diagnostics"] = std::move(diag);

  if (report) j["evaluation"] = report_to_json(*report);
  j["nonfinite_values"] = false;
  j["nonfinite_values"] = scrub_nonfinite(j);
  return j;
}

EstimationResult results_from_json(const json& j) {
  require_schema(j, "crl.estimation-result", kResultSchemaVersion);
  try {
    EstimationResult r;
    r.num_environments = j.at("num_environments").get<int>();
    r.targets_hat = j.at("targets_hat").get<std::vector<NodeSet>>();
    for (const auto& envs : j.at("patterns_hat")) {
      EnvMask m = 0;
      for (const auto& k : envs) m |= env_bit(k.get<int>());
      r.patterns_hat.push_back(m);
    }
    r.decoder_hat = matrix_from_json(j.at("decoder_hat"));
    r.pencil_vectors = matrix_from_json(j.at("pencil_vectors"));
    r.graph_hat = adjacency_from_json(j.at("graph_hat"));
    r.pencil_eigenvalues = vector_from_json(j.at("pencil_eigenvalues"));
    if (r.decoder_hat.cols() != j.at("latent_dim").get<Index>()) {
      throw Error(ErrorKind::InvalidInput, "latent_dim disagrees with decoder_hat");
    }

    const auto& diag = j.at("diagnostics");
    auto& d = r.diagnostics;
    for (const auto& v : diag.at("count_margins")) d.count_margins.push_back(number_or_nan(v));
    d.min_count_margin = number_or_nan(diag.at("min_count_margin"));
    d.decoder_multiplicity = diag.at("decoder_multiplicity").get<std::vector<int>>();
    d.decoder_flagged = diag.at("decoder_flagged").get<bool>();
    d.pencil_min_gap = number_or_nan(diag.at("pencil_min_gap"));
    d.pencil_collision = diag.at("pencil_collision").get<bool>();
    d.latent_cov_min_eig = number_or_nan(diag.at("latent_cov_min_eig"));
    d.pd_floor_hit = diag.at("pd_floor_hit").get<bool>();
    d.alpha_used = number_or_nan(diag.at("alpha_used"));
    d.acyclic = diag.at("acyclic").get<bool>();
    if (diag.contains("alpha_repaired")) d.alpha_repaired = number_or_nan(diag.at("alpha_repaired"));
    if (diag.contains("graph_repaired")) d.graph_repaired = adjacency_from_json(diag.at("graph_repaired"));
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed results: ") + e.what());
  }
}

void write_results(const EstimationResult& result, const EvaluationReport* report,
                   const fs::path& path) {
  write_text(path, results_to_json(result, report).dump(2) + "\n");
}

EstimationResult read_results(const fs::path& path) { return results_from_json(read_json(path)); }

}  // namespace crl::io
