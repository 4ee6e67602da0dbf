#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "crl/estimators.hpp"
#include "crl/io.hpp"
#include "crl/synth.hpp"
#include "oracles.hpp"

using namespace crl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "crl_test_io" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::Io;
}

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t off) {
  return std::uint32_t(b[off]) | std::uint32_t(b[off + 1]) << 8 | std::uint32_t(b[off + 2]) << 16 |
         std::uint32_t(b[off + 3]) << 24;
}

}  // namespace

TEST_CASE("matrix encoding") {
  const MatrixXd m = oracle::gaussian_matrix(3, 2, 1);
  const auto bytes = io::encode_matrix(m);
  REQUIRE(bytes.size() == io::kMatrixHeaderBytes + 6 * 8);
  CHECK(std::memcmp(bytes.data(), "CRLM", 4) == 0);
  CHECK(u32_at(bytes, 4) == 3);
  CHECK(u32_at(bytes, 8) == 2);
  CHECK(u32_at(bytes, 12) == 0);
  // Row-major payload.
  double second;
  std::memcpy(&second, bytes.data() + io::kMatrixHeaderBytes + 8, 8);
  CHECK(second == m(0, 1));

  const MatrixXd back = io::decode_matrix(bytes);
  CHECK(back == m);

  CHECK_THROWS_AS(io::encode_matrix(MatrixXd(0, 3)), Error);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK(kind_of([&] { io::decode_matrix(truncated); }) == ErrorKind::CorruptDataset);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(kind_of([&] { io::decode_matrix(bad_magic); }) == ErrorKind::CorruptDataset);
}

TEST_CASE("dataset round trip") {
  const GroundTruth truth = generate_ground_truth(GenConfig{}, 4);
  const auto data = simulate_dataset(truth, 30, 2);
  const fs::path dir = scratch("roundtrip");
  const auto manifest = io::write_dataset(data, dir, std::nullopt, nlohmann::json{{"note", 1}});
  CHECK(manifest.entries.size() == data.samples.size());

  const auto loaded = io::read_dataset(dir);
  CHECK(loaded.data.num_environments == data.num_environments);
  CHECK(loaded.data.observed_dim == data.observed_dim);
  for (const auto& [key, x] : data.samples) CHECK(loaded.data.samples.at(key) == x);
  CHECK(loaded.manifest.generation["note"] == 1);

  // Same data twice: identical checksums.
  const auto again = io::write_dataset(data, scratch("roundtrip2"));
  for (std::size_t i = 0; i < again.entries.size(); ++i) {
    CHECK(again.entries[i].crc32 == manifest.entries[i].crc32);
  }
}

TEST_CASE("dataset corruption and missing files") {
  const GroundTruth truth = generate_ground_truth(GenConfig{}, 4);
  const auto data = simulate_dataset(truth, 10, 2);
  const fs::path dir = scratch("corrupt");
  const auto manifest = io::write_dataset(data, dir);

  auto bytes = io::read_bytes(dir / manifest.entries[0].file);
  bytes[bytes.size() - 1] ^= 0x5a;
  io::write_bytes(dir / manifest.entries[0].file, bytes);
  CHECK(kind_of([&] { io::read_dataset(dir); }) == ErrorKind::CorruptDataset);

  bytes.resize(bytes.size() - 9);
  io::write_bytes(dir / manifest.entries[0].file, bytes);
  CHECK(kind_of([&] { io::read_dataset(dir); }) == ErrorKind::CorruptDataset);

  CHECK(kind_of([&] { io::read_dataset(scratch("empty")); }) == ErrorKind::Io);

  auto j = manifest.to_json();
  j["format_version"] = 99;
  CHECK(kind_of([&] { io::DatasetManifest::from_json(j); }) == ErrorKind::UnsupportedVersion);
}

TEST_CASE("ground truth round trip") {
  const GroundTruth truth = generate_ground_truth(GenConfig{}, 5);
  const fs::path path = scratch("truth") / "truth.json";
  io::write_ground_truth(truth, path);
  const GroundTruth back = io::read_ground_truth(path);
  CHECK(back.decoder == truth.decoder);
  CHECK(back.sem.weights() == truth.sem.weights());
  CHECK(back.sem.noise_scales(1) == truth.sem.noise_scales(1));
  CHECK(back.sem.noise_scales(2) == truth.sem.noise_scales(2));
  CHECK(back.design.targets() == truth.design.targets());
}

TEST_CASE("results round trip") {
  const GroundTruth truth = generate_ground_truth(GenConfig{}, 6);
  const auto result = run_pipeline(exact_covariances(truth), EstimatorConfig{});
  const auto report = evaluate(result, truth);

  const auto without = io::results_to_json(result);
  CHECK_FALSE(without.contains("evaluation"));
  CHECK(without["nonfinite_values"] == false);
  const auto with = io::results_to_json(result, &report);
  CHECK(with.contains("evaluation"));

  const fs::path path = scratch("results") / "results.json";
  io::write_results(result, &report, path);
  const auto back = io::read_results(path);
  CHECK(back.targets_hat == result.targets_hat);
  CHECK(back.patterns_hat == result.patterns_hat);
  CHECK(back.decoder_hat == result.decoder_hat);
  CHECK(back.graph_hat == result.graph_hat);
  CHECK(back.pencil_eigenvalues == result.pencil_eigenvalues);
  CHECK(back.pencil_vectors == result.pencil_vectors);

  EstimationResult odd = result;
  odd.diagnostics.pencil_min_gap = std::numeric_limits<double>::quiet_NaN();
  const auto scrubbed = io::results_to_json(odd);
  CHECK(scrubbed["nonfinite_values"] == true);
  CHECK(scrubbed["diagnostics"]["pencil_min_gap"].is_null());
}

TEST_CASE("read_json reports syntax errors") {
  const fs::path path = scratch("json") / "bad.json";
  io::write_text(path, "{\n  \"a\": 1,\n  oops\n}\n");
  try {
    io::read_json(path);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK(kind_of([&] { io::read_json(path.parent_path() / "absent.json"); }) == ErrorKind::Io);
}
