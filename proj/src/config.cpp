#include "crl/config.hpp"

#include <initializer_list>
#include <string_view>

#include "crl/io.hpp"

namespace crl {

using nlohmann::json;

namespace {

void reject_unknown(const json& section, std::string_view name,
                    std::initializer_list<std::string_view> allowed) {
  if (!section.is_object()) {
    throw Error(ErrorKind::InvalidInput, "config section '" + std::string(name) + "' must be an object");
  }
  for (const auto& [key, value] : section.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) {
      throw Error(ErrorKind::InvalidInput,
                  "unknown config key '" + std::string(name) + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& section, std::string_view section_name, const char* key, T& out) {
  if (!section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::InvalidInput,
                "config key '" + std::string(section_name) + "." + key + "' has the wrong type");
  }
}

void read_range(const json& section, std::string_view section_name, const char* key,
                ScaleRange& out) {
  if (!section.contains(key)) return;
  std::vector<double> v;
  read(section, section_name, key, v);
  if (v.size() != 2) {
    throw Error(ErrorKind::InvalidInput,
                "config key '" + std::string(section_name) + "." + key + "' must be [lo, hi]");
  }
  out = {v[0], v[1]};
}

}  // namespace

json ExperimentConfig::to_json() const {
  const auto& g = generation;
  json gen = {{"d", g.latent_dim},
              {"p", g.observed_dim},
              {"K", g.num_environments},
              {"edge_prob", g.edge_prob},
              {"max_in_degree", g.max_in_degree},
              {"a_min", g.a_min},
              {"a_max", g.a_max},
              {"scale_1", {g.scale_1.lo, g.scale_1.hi}},
              {"scale_2", {g.scale_2.lo, g.scale_2.hi}},
              {"ratio_gap", g.ratio_gap},
              {"noise", to_string(g.noise)},
              {"seed", g.seed},
              {"samples_per_env", samples_per_env}};
  gen["decoder"] = g.decoder ? io::matrix_to_json(*g.decoder) : json("gaussian");

  const auto& t = estimation.thresholds;
  json est = {{"rho", t.rho},
              {"rank_rel_tol", t.rank_rel_tol},
              {"pd_floor", t.pd_floor},
              {"repair_acyclicity", t.repair_acyclicity},
              {"center", estimation.center}};
  est["alpha"] = t.alpha_mode == AlphaMode::Auto ? json("auto") : json(t.alpha);

  return {{"generation", gen},
          {"estimation", est},
          {"sweep",
           {{"n_grid", sweep.n_grid},
            {"replicates", sweep.replicates},
            {"seed", sweep.seed},
            {"workers", sweep.workers}}},
          {"oracle",
           {{"instances", oracle.instances},
            {"latent_dims", oracle.latent_dims},
            {"observed_factor", oracle.observed_factor},
            {"seed", oracle.seed}}},
          {"output", {{"dir", output_dir}}}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  reject_unknown(j, "<root>", {"generation", "estimation", "sweep", "oracle", "output"});

  if (j.contains("generation")) {
    const auto& s = j.at("generation");
    reject_unknown(s, "generation",
                   {"d", "p", "K", "edge_prob", "max_in_degree", "a_min", "a_max", "scale_1",
                    "scale_2", "ratio_gap", "noise", "seed", "samples_per_env", "decoder"});
    auto& g = c.generation;
    read(s, "generation", "d", g.latent_dim);
    read(s, "generation", "p", g.observed_dim);
    read(s, "generation", "K", g.num_environments);
    read(s, "generation", "edge_prob", g.edge_prob);
    read(s, "generation", "max_in_degree", g.max_in_degree);
    read(s, "generation", "a_min", g.a_min);
    read(s, "generation", "a_max", g.a_max);
    read_range(s, "generation", "scale_1", g.scale_1);
    read_range(s, "generation", "scale_2", g.scale_2);
    read(s, "generation", "ratio_gap", g.ratio_gap);
    read(s, "generation", "seed", g.seed);
    read(s, "generation", "samples_per_env", c.samples_per_env);
    if (s.contains("noise")) {
      std::string name;
      read(s, "generation", "noise", name);
      g.noise = parse_noise_distribution(name);
    }
    if (s.contains("decoder")) {
      const auto& dec = s.at("decoder");
      if (dec.is_string()) {
        if (dec.get<std::string>() != "gaussian") {
          throw Error(ErrorKind::InvalidInput, "generation.decoder must be \"gaussian\" or a matrix");
        }
      } else {
        g.decoder = io::matrix_from_json(dec);
      }
    }
    g.validate();
    if (c.samples_per_env < 1) {
      throw Error(ErrorKind::InvalidInput, "generation.samples_per_env must be positive");
    }
  }

  if (j.contains("estimation")) {
    const auto& s = j.at("estimation");
    reject_unknown(s, "estimation",
                   {"rho", "alpha", "rank_rel_tol", "pd_floor", "repair_acyclicity", "center"});
    auto& t = c.estimation.thresholds;
    read(s, "estimation", "rho", t.rho);
    read(s, "estimation", "rank_rel_tol", t.rank_rel_tol);
    read(s, "estimation", "pd_floor", t.pd_floor);
    read(s, "estimation", "repair_acyclicity", t.repair_acyclicity);
    read(s, "estimation", "center", c.estimation.center);
    if (s.contains("alpha")) {
      const auto& a = s.at("alpha");
      if (a.is_string() && a.get<std::string>() == "auto") {
        t.alpha_mode = AlphaMode::Auto;
      } else if (a.is_number()) {
        t.alpha_mode = AlphaMode::Fixed;
        t.alpha = a.get<double>();
      } else {
        throw Error(ErrorKind::InvalidInput, "estimation.alpha must be a number or \"auto\"");
      }
    }
    t.validate();
  }

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown(s, "sweep", {"n_grid", "replicates", "seed", "workers"});
    read(s, "sweep", "n_grid", c.sweep.n_grid);
    read(s, "sweep", "replicates", c.sweep.replicates);
    read(s, "sweep", "seed", c.sweep.seed);
    read(s, "sweep", "workers", c.sweep.workers);
    if (c.sweep.n_grid.empty()) throw Error(ErrorKind::InvalidInput, "sweep.n_grid is empty");
    for (Index n : c.sweep.n_grid) {
      if (n < 1) throw Error(ErrorKind::InvalidInput, "sweep.n_grid entries must be positive");
    }
    if (c.sweep.replicates < 1 || c.sweep.workers < 1) {
      throw Error(ErrorKind::InvalidInput, "sweep.replicates and sweep.workers must be positive");
    }
  }

  if (j.contains("oracle")) {
    const auto& s = j.at("oracle");
    reject_unknown(s, "oracle", {"instances", "latent_dims", "observed_factor", "seed"});
    read(s, "oracle", "instances", c.oracle.instances);
    read(s, "oracle", "latent_dims", c.oracle.latent_dims);
    read(s, "oracle", "observed_factor", c.oracle.observed_factor);
    read(s, "oracle", "seed", c.oracle.seed);
    if (c.oracle.instances < 1 || c.oracle.latent_dims.empty() || c.oracle.observed_factor < 1) {
      throw Error(ErrorKind::InvalidInput, "oracle section has non-positive sizes");
    }
    for (int d : c.oracle.latent_dims) {
      if (d < 2) throw Error(ErrorKind::InvalidInput, "oracle.latent_dims entries must be >= 2");
    }
  }

  if (j.contains("output")) {
    const auto& s = j.at("output");
    reject_unknown(s, "output", {"dir"});
    read(s, "output", "dir", c.output_dir);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_json(io::read_json(path));
}

}  // namespace crl
