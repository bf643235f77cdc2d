#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "moebl/experiments.hpp"

namespace moebl {

ExperimentId parse_experiment_id(const std::string& name) {
  if (name == "exp1") return ExperimentId::exp1;
  if (name == "exp2") return ExperimentId::exp2;
  if (name == "exp3") return ExperimentId::exp3;
  if (name == "verify") return ExperimentId::verify;
  throw ConfigError("unknown experiment '" + name + "'");
}

const char* to_string(ExperimentId id) {
  switch (id) {
    case ExperimentId::exp1: return "exp1";
    case ExperimentId::exp2: return "exp2";
    case ExperimentId::exp3: return "exp3";
    case ExperimentId::verify: return "verify";
  }
  return "?";
}

ExperimentConfig ExperimentConfig::defaults(ExperimentId id) {
  ExperimentConfig c;
  c.id = id;
  switch (id) {
    case ExperimentId::exp1:
      c.n = 1'000'000;
      c.dim = 4;
      c.taus = {0.02, 0.05, 0.10, 0.20, 0.45, 0.60};
      break;
    case ExperimentId::exp2:
      c.n = 1'000'000;
      c.dim = 4;
      c.tau = 0.10;
      c.offsets = {0.0, 0.5, 1.0, 1.5, 2.0, 2.25};
      break;
    case ExperimentId::exp3:
      c.n = 200'000;
      c.dim = 8;
      c.taus = {0.05, 0.1, 0.2, 0.4};
      break;
    case ExperimentId::verify:
      c.n = 1'000'000;
      c.dim = 4;
      c.taus = {0.02, 0.05, 0.10, 0.20};
      break;
  }
  return c;
}

namespace {

double get_double(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
  return v.get<double>();
}

std::uint64_t get_u64(const nlohmann::json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError("'" + key + "' must be a non-negative integer");
}

std::vector<double> get_grid(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError("'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(get_double(e, key));
  return out;
}

void check_grid(const std::vector<double>& g, const char* key, bool positive) {
  if (g.empty()) throw ConfigError(std::string(key) + " grid is empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) throw ConfigError(std::string(key) + " grid has a non-finite entry");
    if (positive && g[i] <= 0.0) throw ConfigError(std::string(key) + " grid entries must be > 0");
    if (i > 0 && !(g[i] > g[i - 1])) throw ConfigError(std::string(key) + " grid must be strictly increasing");
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void ExperimentConfig::apply_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : doc.items()) {
    if (key == "experiment") {
      if (!v.is_string() || parse_experiment_id(v.get<std::string>()) != id)
        throw ConfigError("config 'experiment' does not match the subcommand");
    } else if (key == "seed") {
      seed = get_u64(v, key);
    } else if (key == "samples") {
      n = static_cast<std::size_t>(get_u64(v, key));
    } else if (key == "dim") {
      dim = static_cast<std::size_t>(get_u64(v, key));
    } else if (key == "taus") {
      taus = get_grid(v, key);
    } else if (key == "offsets") {
      offsets = get_grid(v, key);
    } else if (key == "tau") {
      tau = get_double(v, key);
    } else if (key == "epsilon") {
      epsilon = get_double(v, key);
    } else if (key == "contrast_norm") {
      contrast_norm = get_double(v, key);
    } else if (key == "perturbation") {
      perturbation = get_double(v, key);
    } else if (key == "eta") {
      eta = get_double(v, key);
    } else if (key == "steps") {
      steps = static_cast<std::size_t>(get_u64(v, key));
    } else if (key == "teacher_contrast") {
      teacher_contrast = get_double(v, key);
    } else if (key == "student_contrast") {
      student_contrast = get_double(v, key);
    } else if (key == "initial_alignment") {
      initial_alignment = get_double(v, key);
    } else if (key == "u0_norm") {
      u0_norm = get_double(v, key);
    } else if (key == "record_every") {
      record_every = static_cast<std::size_t>(get_u64(v, key));
    } else if (key == "out") {
      if (!v.is_string()) throw ConfigError("'out' must be a string");
      out_dir = v.get<std::string>();
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

void ExperimentConfig::apply_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_json_text(ss.str());
}

void ExperimentConfig::validate() const {
  require(n >= 2, "samples must be >= 2");
  require(dim >= 2 && dim <= 64, "dim must lie in [2, 64]");
  switch (id) {
    case ExperimentId::exp1:
    case ExperimentId::verify:
      check_grid(taus, "taus", true);
      require(std::isfinite(contrast_norm) && contrast_norm >= 0.0, "contrast_norm must be finite and >= 0");
      break;
    case ExperimentId::exp2:
      check_grid(offsets, "offsets", false);
      require(std::isfinite(tau) && tau > 0.0, "tau must be > 0");
      require(std::isfinite(contrast_norm) && contrast_norm >= 0.0, "contrast_norm must be finite and >= 0");
      require(std::isfinite(perturbation) && perturbation > 0.0, "perturbation must be > 0");
      break;
    case ExperimentId::exp3:
      check_grid(taus, "taus", true);
      require(n > dim, "samples must exceed dim for the shared-predictor fit");
      require(std::isfinite(eta) && eta > 0.0, "eta must be > 0");
      require(steps >= 1, "steps must be >= 1");
      require(std::isfinite(teacher_contrast) && teacher_contrast > 0.0, "teacher_contrast must be > 0");
      require(std::isfinite(student_contrast), "student_contrast must be finite");
      require(initial_alignment > 0.0 && initial_alignment <= 1.0, "initial_alignment must lie in (0, 1]");
      require(std::isfinite(u0_norm) && u0_norm > 0.0, "u0_norm must be > 0");
      require(record_every >= 1, "record_every must be >= 1");
      break;
  }
  if (id == ExperimentId::verify)
    require(epsilon > 0.0 && epsilon < 0.5, "epsilon must lie in (0, 1/2)");
}

}  // namespace moebl
