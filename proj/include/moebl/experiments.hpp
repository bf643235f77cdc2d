#pragma once

// Seeded drivers for the three diagnostics and the invariant suite, plus the
// file writers used by the CLI. Drivers return in-memory results; writers
// turn them into CSV / JSON / table / plot-data files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "moebl/boundary_mass.hpp"
#include "moebl/moe_core.hpp"
#include "moebl/risk_lab.hpp"
#include "moebl/symmetry_lab.hpp"

namespace moebl {

/// Bad or inconsistent configuration (CLI exit status 1).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class ExperimentId { exp1, exp2, exp3, verify };

ExperimentId parse_experiment_id(const std::string& name);
const char* to_string(ExperimentId id);

struct ExperimentConfig {
  ExperimentId id = ExperimentId::exp1;
  std::uint64_t seed = 20240607;
  std::size_t n = 1'000'000;
  std::size_t dim = 4;
  std::vector<double> taus;     // exp1, exp3
  std::vector<double> offsets;  // exp2
  double tau = 0.1;             // exp2 fixed temperature
  double epsilon = 0.25;        // verify: ambiguity level
  double contrast_norm = 2.0;   // exp1/exp2 expert contrast |beta_1 - beta_2|
  double perturbation = 0.063;  // exp2 router-score shift for the flip rate
  double eta = 0.05;            // exp3
  std::size_t steps = 2000;     // exp3
  double teacher_contrast = 0.5;    // exp3 |d_*|
  double student_contrast = 0.5;    // exp3 student contrast as a multiple of d_*
  double initial_alignment = 0.05;  // exp3
  double u0_norm = 0.01;            // exp3
  std::size_t record_every = 1;     // exp3 trace thinning
  std::filesystem::path out_dir = "out";

  /// Defaults for one experiment id (each has its own n, grids and dimension).
  static ExperimentConfig defaults(ExperimentId id);

  /// Applies a flat JSON object of overrides; unknown keys are rejected.
  void apply_json_text(const std::string& text);
  void apply_json_file(const std::filesystem::path& path);

  /// Throws ConfigError when a grid is empty, unsorted or out of range.
  void validate() const;
};

// ---- exp1: boundary-layer scaling in the binary linear Gaussian model ----

struct Exp1Row {
  double tau = 0.0;
  BoundaryMassEstimate bm;  // P(|Delta| <= 2 tau)
  double bm_analytic = 0.0;
  RiskEstimate risk;
  double gap_over_tau = 0.0;
};

struct Exp1Result {
  std::vector<Exp1Row> rows;
  double slope_mass = 0.0;   // log-log over tau <= 0.1
  double slope_gap = 0.0;
  double correlation = 0.0;  // mass vs gap over the full grid
  double wall_seconds = 0.0;
};

/// The exp1 teacher, also used by the verify suite: router direction e_1,
/// offset b, experts with contrast contrast_norm * e_2 (orthogonal to the router).
TeacherSpec binary_gaussian_teacher(std::size_t dim, double offset, double contrast_norm);

Exp1Result run_exp1(const ExperimentConfig& config);

// ---- exp2: interface offset at fixed temperature ----

struct Exp2Row {
  double offset = 0.0;
  BoundaryMassEstimate bm;
  double bm_analytic = 0.0;
  RiskEstimate risk;
  McEstimate flip;  // hard assignment changes under a score shift of `perturbation`
};

struct Exp2Result {
  std::vector<Exp2Row> rows;
  double corr_gap_mass = 0.0;
  double corr_flip_mass = 0.0;
  bool gap_decreasing = false;
  bool flip_decreasing = false;
  double wall_seconds = 0.0;
};

Exp2Result run_exp2(const ExperimentConfig& config);

// ---- exp3: reduced symmetry breaking ----

struct Exp3Run {
  double tau = 0.0;
  RouterTrace trace;
};

struct Exp3Result {
  std::vector<Exp3Run> runs;
  Eigen::VectorXd v;
  Eigen::VectorXd u0;
  double rayleigh_analytic = 0.0;
  bool entropy_increasing = false;
  bool bm_increasing = false;
  bool unorm_increasing = false;
  double min_alignment = 0.0;
  bool any_diverged = false;
  double wall_seconds = 0.0;
};

Exp3Result run_exp3(const ExperimentConfig& config);

// ---- verify ----

struct CheckResult {
  std::string name;
  std::string tolerance;
  double observed = 0.0;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  double wall_seconds = 0.0;
  [[nodiscard]] bool all_passed() const;
};

VerifyReport run_verify(const ExperimentConfig& config);

/// Softmax without max subtraction, kept only as the suite's negative control.
Eigen::VectorXd naive_softmax(const Eigen::VectorXd& z, double tau);

// ---- writers ----

/// 6 significant digits, as used in every CSV / table cell.
std::string format6(double value);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

void write_exp1(const Exp1Result& result, const ExperimentConfig& config);
void write_exp2(const Exp2Result& result, const ExperimentConfig& config);
void write_exp3(const Exp3Result& result, const ExperimentConfig& config);
void write_verify(const VerifyReport& report, const ExperimentConfig& config);

std::string exp1_csv(const Exp1Result& result);
std::string exp2_csv(const Exp2Result& result);
std::string exp3_csv(const Exp3Result& result);

/// Trace file name for one temperature, e.g. exp3_trace_tau0.05.csv.
std::string exp3_trace_name(double tau);

}  // namespace moebl
