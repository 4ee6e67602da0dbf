#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "crl_test_cli";

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run crl(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path out = kRoot / "stdout.txt";
  const fs::path err = kRoot / "stderr.txt";
  const std::string cmd = std::string("CRL_LOG=quiet ") + CRL_BINARY + " " + args + " >" +
                          out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

fs::path write_config(const char* name, const std::string& text) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("generate, estimate, evaluate") {
  const fs::path data = kRoot / "data";
  fs::remove_all(data);
  const auto cfg = write_config("small.json", R"({"generation": {"d": 4, "p": 12}})");
  const auto gen = crl("generate --config " + cfg.string() + " --out " + data.string() +
                       " --seed 3 --n 3000");
  REQUIRE(gen.code == 0);
  CHECK(gen.out.find("A1 strong separation: pass") != std::string::npos);
  CHECK(gen.out.find("1-rho*") != std::string::npos);
  CHECK(fs::exists(data / "manifest.json"));
  CHECK(fs::exists(data / "truth.json"));

  // Same seed: identical manifest.
  const fs::path again = kRoot / "data_again";
  fs::remove_all(again);
  REQUIRE(crl("generate --config " + cfg.string() + " --out " + again.string() +
              " --seed 3 --n 3000").code == 0);
  CHECK(slurp(data / "manifest.json") == slurp(again / "manifest.json"));

  const fs::path pop = kRoot / "pop.json";
  const auto est = crl("estimate " + data.string() + " --population --out " + pop.string());
  REQUIRE(est.code == 0);
  const auto result = nlohmann::json::parse(slurp(pop));
  CHECK(result["evaluation"]["targets_exact"] == true);
  CHECK(result["evaluation"]["graph_exact"] == true);
  CHECK(result["evaluation"]["max_angle_error"].get<double>() < 1e-8);

  const fs::path sample = kRoot / "sample.json";
  REQUIRE(crl("estimate " + data.string() + " --alpha auto --rho 0.5 --out " + sample.string())
              .code == 0);

  const fs::path report = kRoot / "report.json";
  const auto ev = crl("evaluate " + pop.string() + " " + (data / "truth.json").string() +
                      " --out " + report.string());
  CHECK(ev.code == 0);
  CHECK(ev.out.find("targets exact") != std::string::npos);
  CHECK(nlohmann::json::parse(slurp(report))["graph_shd"] == 0);

  // A result from a different instance with another d: exit 2.
  const fs::path other = kRoot / "other";
  fs::remove_all(other);
  const auto cfg3 = write_config("d3.json", R"({"generation": {"d": 3, "p": 6}})");
  REQUIRE(crl("generate --config " + cfg3.string() + " --out " + other.string() + " --n 50").code == 0);
  CHECK(crl("evaluate " + pop.string() + " " + (other / "truth.json").string()).code == 2);
}

TEST_CASE("usage and IO errors exit 1") {
  CHECK(crl("").code == 1);
  CHECK(crl("estimate " + (kRoot / "no_such_dir").string()).code == 1);

  const auto bad = write_config("bad.json", "{\n  \"generation\": {\n    \"d\": 4,\n  }\n}\n");
  const auto r = crl("generate --config " + bad.string() + " --out " + (kRoot / "x").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("line") != std::string::npos);

  const auto unknown = write_config("unknown.json", R"({"estimation": {"alpa": 0.1}})");
  const auto u = crl("oracle --config " + unknown.string());
  CHECK(u.code == 1);
  CHECK(u.err.find("estimation.alpa") != std::string::npos);

  const auto infeasible = write_config("k3.json", R"({"generation": {"K": 3}})");
  const auto k = crl("generate --config " + infeasible.string() + " --out " + (kRoot / "k3").string());
  CHECK(k.code == 1);
  CHECK(k.err.find("DesignInfeasible") != std::string::npos);
}

TEST_CASE("stage failures exit 2 and name the stage") {
  const fs::path data = kRoot / "tiny";
  fs::remove_all(data);
  const auto cfg = write_config("tiny.json", R"({"generation": {"d": 4, "p": 12}})");
  REQUIRE(crl("generate --config " + cfg.string() + " --out " + data.string() + " --n 1").code == 0);
  const auto r = crl("estimate " + data.string());
  CHECK(r.code == 2);
  CHECK(r.err.find("[targets]") != std::string::npos);
}

TEST_CASE("oracle subcommand") {
  const auto cfg = write_config("oracle.json", R"({"oracle": {"instances": 4}})");
  const auto ok = crl("oracle --config " + cfg.string());
  CHECK(ok.code == 0);
  CHECK(ok.out.find("4/4 instances passed") != std::string::npos);
  const auto dup = crl("oracle --config " + cfg.string() + " --inject duplicate-pattern");
  CHECK(dup.code == 2);
  CHECK(dup.out.find("TargetInconsistency") != std::string::npos);
  const auto eq = crl("oracle --config " + cfg.string() + " --inject equal-ratios");
  CHECK(eq.out.find("collision") != std::string::npos);
}

TEST_CASE("sweep subcommand") {
  const auto cfg = write_config(
      "sweep.json",
      R"({"generation": {"d": 3, "p": 8}, "sweep": {"n_grid": [300, 100, 200], "replicates": 2}})");
  const fs::path a = kRoot / "sweep_a";
  const fs::path b = kRoot / "sweep_b";
  REQUIRE(crl("sweep --config " + cfg.string() + " --out " + a.string() + " --no-timing").code == 0);
  REQUIRE(crl("sweep --config " + cfg.string() + " --out " + b.string() +
              " --no-timing --workers 2").code == 0);
  const std::string csv = slurp(a / "sweep.csv");
  CHECK(csv == slurp(b / "sweep.csv"));
  CHECK(slurp(a / "sweep_summary.json") == slurp(b / "sweep_summary.json"));
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 7);
}
