#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "moebl/experiments.hpp"
#include "test_support.hpp"

using namespace moebl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("moebl_test_" + name);
  fs::remove_all(d);
  return d;
}

ExperimentConfig small(ExperimentId id, std::size_t n) {
  ExperimentConfig c = ExperimentConfig::defaults(id);
  c.n = n;
  return c;
}

}  // namespace

TEST_CASE("experiment ids") {
  for (ExperimentId id : {ExperimentId::exp1, ExperimentId::exp2, ExperimentId::exp3, ExperimentId::verify})
    CHECK(parse_experiment_id(to_string(id)) == id);
  CHECK_THROWS_AS(parse_experiment_id("exp4"), ConfigError);
}

TEST_CASE("defaults are valid and carry the documented grids") {
  for (ExperimentId id : {ExperimentId::exp1, ExperimentId::exp2, ExperimentId::exp3, ExperimentId::verify})
    CHECK_NOTHROW(ExperimentConfig::defaults(id).validate());
  const ExperimentConfig e1 = ExperimentConfig::defaults(ExperimentId::exp1);
  CHECK(e1.taus == std::vector<double>{0.02, 0.05, 0.10, 0.20, 0.45, 0.60});
  CHECK(e1.n == 1'000'000);
  const ExperimentConfig e2 = ExperimentConfig::defaults(ExperimentId::exp2);
  CHECK(e2.offsets == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0, 2.25});
  CHECK(e2.tau == 0.1);
  const ExperimentConfig e3 = ExperimentConfig::defaults(ExperimentId::exp3);
  CHECK(e3.taus == std::vector<double>{0.05, 0.1, 0.2, 0.4});
  CHECK(e3.dim == 8);
  CHECK(e3.n == 200'000);
  CHECK(e3.eta == 0.05);
  CHECK(e3.steps == 2000);
  CHECK(e3.initial_alignment == 0.05);
}

TEST_CASE("JSON overrides") {
  ExperimentConfig c = ExperimentConfig::defaults(ExperimentId::exp1);
  c.apply_json_text(R"({"experiment": "exp1", "seed": 5, "samples": 1234, "taus": [0.1, 0.2], "out": "x"})");
  CHECK(c.seed == 5);
  CHECK(c.n == 1234);
  CHECK(c.taus == std::vector<double>{0.1, 0.2});
  CHECK(c.out_dir == fs::path("x"));
  CHECK_NOTHROW(c.validate());

  CHECK_THROWS_AS(c.apply_json_text(R"({"experiment": "exp2"})"), ConfigError);
  CHECK_THROWS_AS(c.apply_json_text(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(c.apply_json_text(R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(c.apply_json_text(R"({"taus": "0.1"})"), ConfigError);
  CHECK_THROWS_AS(c.apply_json_text(R"({"tau": "fast"})"), ConfigError);
  CHECK_THROWS_AS(c.apply_json_text("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(c.apply_json_text("{not json"), ConfigError);

  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"offsets": [0, 1], "tau": 0.2})";
  ExperimentConfig e2 = ExperimentConfig::defaults(ExperimentId::exp2);
  e2.apply_json_file(dir / "c.json");
  CHECK(e2.offsets == std::vector<double>{0.0, 1.0});
  CHECK(e2.tau == 0.2);
  CHECK_THROWS_AS(e2.apply_json_file(dir / "missing.json"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("validation rejects bad grids and knobs") {
  auto bad = [](ExperimentId id, const char* json) {
    ExperimentConfig c = ExperimentConfig::defaults(id);
    c.apply_json_text(json);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad(ExperimentId::exp1, R"({"taus": []})");
  bad(ExperimentId::exp1, R"({"taus": [0.2, 0.1]})");
  bad(ExperimentId::exp1, R"({"taus": [0.1, 0.1]})");
  bad(ExperimentId::exp1, R"({"taus": [0.0, 0.1]})");
  bad(ExperimentId::exp1, R"({"samples": 1})");
  bad(ExperimentId::exp1, R"({"dim": 1})");
  bad(ExperimentId::exp2, R"({"offsets": []})");
  bad(ExperimentId::exp2, R"({"tau": 0})");
  bad(ExperimentId::exp2, R"({"perturbation": 0})");
  bad(ExperimentId::exp3, R"({"eta": 0})");
  bad(ExperimentId::exp3, R"({"steps": 0})");
  bad(ExperimentId::exp3, R"({"initial_alignment": 1.5})");
  bad(ExperimentId::exp3, R"({"samples": 4})");
  bad(ExperimentId::verify, R"({"epsilon": 0.5})");
}

TEST_CASE("format6") {
  CHECK(format6(0.1585194) == "0.158519");
  CHECK(format6(1.0) == "1");
  CHECK(format6(1234567.0) == "1.23457e+06");
  CHECK(format6(-2.5e-5) == "-2.5e-05");
}

TEST_CASE("binary_gaussian_teacher layout") {
  const TeacherSpec t = binary_gaussian_teacher(4, 0.5, 2.0);
  const Eigen::Vector4d x(0.3, 1.5, -2.0, 7.0);
  const LogitVector z = t.router.logits(x);
  CHECK(z[0] - z[1] == doctest::Approx(0.3 + 0.5));
  const Eigen::VectorXd f = t.experts.predict_all(x);
  CHECK(f(0) - f(1) == doctest::Approx(2.0 * 1.5));
  CHECK(f(0) + f(1) == doctest::Approx(0.0));
}

TEST_CASE("exp1 at small n: shape and determinism") {
  ExperimentConfig c = small(ExperimentId::exp1, 100'000);
  const Exp1Result a = run_exp1(c);
  const Exp1Result b = run_exp1(c);
  REQUIRE(a.rows.size() == c.taus.size());
  CHECK(exp1_csv(a) == exp1_csv(b));
  CHECK(exp1_csv(a).rfind("tau,bm_mc,bm_analytic,gap,gap_over_tau\n", 0) == 0);
  for (const auto& row : a.rows) {
    const double truth = 2.0 * moebl::test::Phi(2.0 * row.tau) - 1.0;
    CHECK(row.bm_analytic == doctest::Approx(truth).epsilon(1e-12));
    CHECK(std::fabs(row.bm.estimate.value - truth) <= 4.0 * row.bm.estimate.std_error);
    CHECK(row.gap_over_tau == doctest::Approx(row.risk.gap / row.tau));
  }
  CHECK(std::isfinite(a.slope_mass));
  CHECK(a.correlation > 0.99);

  ExperimentConfig other = c;
  other.seed += 1;
  CHECK(exp1_csv(run_exp1(other)) != exp1_csv(a));
}

TEST_CASE("exp2 at small n: shape and monotone analytic column") {
  const Exp2Result r = run_exp2(small(ExperimentId::exp2, 100'000));
  REQUIRE(r.rows.size() == 6);
  for (std::size_t i = 1; i < r.rows.size(); ++i) CHECK(r.rows[i].bm_analytic < r.rows[i - 1].bm_analytic);
  const double b05 = moebl::test::Phi(0.2 - 0.5) - moebl::test::Phi(-0.2 - 0.5);
  CHECK(r.rows[1].bm_analytic == doctest::Approx(b05).epsilon(1e-12));
  CHECK(exp2_csv(r).rfind("offset,bm,gap,flip\n", 0) == 0);
}

TEST_CASE("exp3 at small scale: trace layout") {
  ExperimentConfig c = small(ExperimentId::exp3, 5000);
  c.steps = 50;
  c.taus = {0.1, 0.4};
  c.record_every = 10;
  const Exp3Result r = run_exp3(c);
  REQUIRE(r.runs.size() == 2);
  CHECK(r.v.norm() == doctest::Approx(1.0));
  CHECK(r.u0.norm() == doctest::Approx(c.u0_norm));
  CHECK(alignment(r.u0, r.v) == doctest::Approx(c.initial_alignment));
  for (const auto& run : r.runs) {
    CHECK(run.trace.records.size() == 6);
    CHECK(run.trace.final().step == 50);
    CHECK(run.trace.records.front().u == r.u0);
  }
  CHECK(exp3_csv(r).rfind("tau,risk,align,unorm,bm,entropy\n", 0) == 0);
  CHECK(exp3_trace_name(0.05) == "exp3_trace_tau0.05.csv");
}

TEST_CASE("writers produce every artifact atomically") {
  const fs::path dir = scratch("write");
  ExperimentConfig c = small(ExperimentId::exp1, 20'000);
  c.out_dir = dir;
  const Exp1Result r = run_exp1(c);
  write_exp1(r, c);
  for (const char* f : {"exp1.csv", "exp1_summary.json", "exp1_table.txt", "exp1_bm.dat", "exp1_gap.dat"})
    CHECK(fs::exists(dir / f));
  CHECK(slurp(dir / "exp1.csv") == exp1_csv(r));
  const auto j = nlohmann::json::parse(slurp(dir / "exp1_summary.json"));
  CHECK(j["seed"] == c.seed);
  CHECK(j["n"] == c.n);
  CHECK(j["rows"].size() == c.taus.size());
  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".tmp");

  ExperimentConfig c3 = small(ExperimentId::exp3, 3000);
  c3.out_dir = dir;
  c3.steps = 5;
  c3.taus = {0.05};
  write_exp3(run_exp3(c3), c3);
  CHECK(fs::exists(dir / "exp3_trace_tau0.05.csv"));
  CHECK(fs::exists(dir / "exp3_trace_tau0.05.dat"));
  CHECK(slurp(dir / "exp3_trace_tau0.05.csv").rfind("step,alignment_deficit,loss\n", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("naive softmax is the overflow-prone control") {
  const Eigen::Vector2d z(1000.0, 999.0);
  CHECK_FALSE(naive_softmax(z, 1.0).allFinite());
  const Eigen::Vector2d ok(1.0, 0.0);
  CHECK((naive_softmax(ok, 0.5) - softmax_weights(LogitVector(ok), 0.5)).norm() < 1e-15);
}
