#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

#include "json.hpp"

#include "moebl/experiments.hpp"
#include "moebl/kernels.hpp"

namespace moebl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format6(double value) {
  std::ostringstream os;
  os << std::setprecision(6) << value;
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string exp3_trace_name(double tau) { return "exp3_trace_tau" + format6(tau) + ".csv"; }

namespace {

std::string csv(std::initializer_list<double> cells) {
  std::string line;
  bool first = true;
  for (double c : cells) {
    if (!first) line += ',';
    line += format6(c);
    first = false;
  }
  line += '\n';
  return line;
}

// Right-aligned fixed-width text table.
std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t j = 0; j < header.size(); ++j) width[j] = header[j].size();
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j) s += "  ";
      s += std::string(width[j] - cells[j].size(), ' ') + cells[j];
    }
    return s + '\n';
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
  for (const auto& r : rows) out += line(r);
  return out;
}

std::string dat(const char* xname, const char* yname, const std::vector<double>& x, const std::vector<double>& y) {
  std::string s = std::string("# ") + xname + ' ' + yname + '\n';
  for (std::size_t i = 0; i < x.size(); ++i) s += format6(x[i]) + ' ' + format6(y[i]) + '\n';
  return s;
}

json mc(const McEstimate& e) { return {{"value", e.value}, {"std_error", e.std_error}, {"n", e.n}}; }

json meta(const ExperimentConfig& c, double wall) {
  return {{"experiment", to_string(c.id)},
          {"seed", c.seed},
          {"n", c.n},
          {"dim", c.dim},
          {"kernels", std::string(kernels::active_kernels().name)},
          {"wall_seconds", wall}};
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + '\n'); }

}  // namespace

std::string exp1_csv(const Exp1Result& r) {
  std::string s = "tau,bm_mc,bm_analytic,gap,gap_over_tau\n";
  for (const auto& row : r.rows)
    s += csv({row.tau, row.bm.estimate.value, row.bm_analytic, row.risk.gap, row.gap_over_tau});
  return s;
}

std::string exp2_csv(const Exp2Result& r) {
  std::string s = "offset,bm,gap,flip\n";
  for (const auto& row : r.rows) s += csv({row.offset, row.bm.estimate.value, row.risk.gap, row.flip.value});
  return s;
}

std::string exp3_csv(const Exp3Result& r) {
  std::string s = "tau,risk,align,unorm,bm,entropy\n";
  for (const auto& run : r.runs) {
    const auto& f = run.trace.final();
    s += csv({run.tau, f.risk, f.alignment, f.u.norm(), f.boundary_mass, f.entropy});
  }
  return s;
}

void write_exp1(const Exp1Result& r, const ExperimentConfig& c) {
  const fs::path dir = c.out_dir;
  write_file_atomic(dir / "exp1.csv", exp1_csv(r));

  json rows = json::array();
  std::vector<std::vector<std::string>> trows;
  std::vector<double> tau, bm, gap;
  for (const auto& row : r.rows) {
    rows.push_back({{"tau", row.tau},
                    {"bm_mc", mc(row.bm.estimate)},
                    {"bm_analytic", row.bm_analytic},
                    {"soft_risk", mc(row.risk.soft)},
                    {"hard_risk", mc(row.risk.hard)},
                    {"gap", row.risk.gap},
                    {"gap_over_tau", row.gap_over_tau}});
    trows.push_back({format6(row.tau), format6(row.bm.estimate.value), format6(row.bm_analytic),
                     format6(row.risk.gap), format6(row.gap_over_tau)});
    tau.push_back(row.tau);
    bm.push_back(row.bm.estimate.value);
    gap.push_back(row.risk.gap);
  }
  json j = meta(c, r.wall_seconds);
  j["contrast_norm"] = c.contrast_norm;
  j["taus"] = c.taus;
  j["slope_mass_small_tau"] = r.slope_mass;
  j["slope_gap_small_tau"] = r.slope_gap;
  j["corr_mass_gap"] = r.correlation;
  j["rows"] = rows;
  write_json(dir / "exp1_summary.json", j);
  write_file_atomic(dir / "exp1_table.txt",
                    table({"tau", "P(|Delta|<=2tau)", "analytic", "L_tau - L_0", "ratio"}, trows));
  write_file_atomic(dir / "exp1_bm.dat", dat("tau", "bm_mc", tau, bm));
  write_file_atomic(dir / "exp1_gap.dat", dat("tau", "gap", tau, gap));
}

void write_exp2(const Exp2Result& r, const ExperimentConfig& c) {
  const fs::path dir = c.out_dir;
  write_file_atomic(dir / "exp2.csv", exp2_csv(r));

  json rows = json::array();
  std::vector<std::vector<std::string>> trows;
  std::vector<double> off, bm, gap, flip;
  for (const auto& row : r.rows) {
    rows.push_back({{"offset", row.offset},
                    {"bm", mc(row.bm.estimate)},
                    {"bm_analytic", row.bm_analytic},
                    {"soft_risk", mc(row.risk.soft)},
                    {"hard_risk", mc(row.risk.hard)},
                    {"gap", row.risk.gap},
                    {"flip", mc(row.flip)}});
    trows.push_back({format6(row.offset), format6(row.bm.estimate.value), format6(row.bm_analytic),
                     format6(row.risk.gap), format6(row.flip.value)});
    off.push_back(row.offset);
    bm.push_back(row.bm.estimate.value);
    gap.push_back(row.risk.gap);
    flip.push_back(row.flip.value);
  }
  json j = meta(c, r.wall_seconds);
  j["tau"] = c.tau;
  j["contrast_norm"] = c.contrast_norm;
  j["perturbation"] = c.perturbation;
  j["offsets"] = c.offsets;
  j["corr_gap_mass"] = r.corr_gap_mass;
  j["corr_flip_mass"] = r.corr_flip_mass;
  j["gap_strictly_decreasing"] = r.gap_decreasing;
  j["flip_strictly_decreasing"] = r.flip_decreasing;
  j["rows"] = rows;
  write_json(dir / "exp2_summary.json", j);
  write_file_atomic(dir / "exp2_table.txt",
                    table({"offset b", "boundary mass", "analytic", "risk gap", "flip rate"}, trows));
  write_file_atomic(dir / "exp2_bm.dat", dat("offset", "bm", off, bm));
  write_file_atomic(dir / "exp2_gap.dat", dat("offset", "gap", off, gap));
  write_file_atomic(dir / "exp2_flip.dat", dat("offset", "flip", off, flip));
}

void write_exp3(const Exp3Result& r, const ExperimentConfig& c) {
  const fs::path dir = c.out_dir;
  write_file_atomic(dir / "exp3.csv", exp3_csv(r));

  json runs = json::array();
  std::vector<std::vector<std::string>> trows;
  for (const auto& run : r.runs) {
    const auto& f = run.trace.final();
    runs.push_back({{"tau", run.tau},
                    {"final_step", f.step},
                    {"risk", f.risk},
                    {"alignment", f.alignment},
                    {"unorm", f.u.norm()},
                    {"boundary_mass", f.boundary_mass},
                    {"entropy", f.entropy},
                    {"diverged", run.trace.diverged}});
    trows.push_back({format6(run.tau), format6(f.risk), format6(f.alignment), format6(f.u.norm()),
                     format6(f.boundary_mass), format6(f.entropy)});

    std::string trace = "step,alignment_deficit,loss\n";
    std::string plot = "# step alignment_deficit\n";
    for (const auto& rec : run.trace.records) {
      const double deficit = 1.0 - rec.alignment;
      trace += std::to_string(rec.step) + ',' + format6(deficit) + ',' + format6(rec.risk) + '\n';
      plot += std::to_string(rec.step) + ' ' + format6(deficit) + '\n';
    }
    const std::string name = exp3_trace_name(run.tau);
    write_file_atomic(dir / name, trace);
    write_file_atomic(dir / (name.substr(0, name.size() - 4) + ".dat"), plot);
  }
  json j = meta(c, r.wall_seconds);
  j["taus"] = c.taus;
  j["eta"] = c.eta;
  j["steps"] = c.steps;
  j["teacher_contrast"] = c.teacher_contrast;
  j["student_contrast"] = c.student_contrast;
  j["initial_alignment"] = c.initial_alignment;
  j["u0_norm"] = c.u0_norm;
  j["v"] = std::vector<double>(r.v.data(), r.v.data() + r.v.size());
  j["u0"] = std::vector<double>(r.u0.data(), r.u0.data() + r.u0.size());
  j["rayleigh_analytic_sign"] = r.rayleigh_analytic;
  j["min_alignment"] = r.min_alignment;
  j["entropy_strictly_increasing"] = r.entropy_increasing;
  j["bm_strictly_increasing"] = r.bm_increasing;
  j["unorm_strictly_increasing"] = r.unorm_increasing;
  j["any_diverged"] = r.any_diverged;
  j["runs"] = runs;
  write_json(dir / "exp3_summary.json", j);
  write_file_atomic(dir / "exp3_table.txt",
                    table({"tau", "final risk", "alignment", "|u|", "boundary mass", "gate entropy"}, trows));
}

void write_verify(const VerifyReport& report, const ExperimentConfig& c) {
  const fs::path dir = c.out_dir;
  json checks = json::array();
  std::vector<std::vector<std::string>> trows;
  for (const auto& chk : report.checks) {
    checks.push_back({{"name", chk.name},
                      {"tolerance", chk.tolerance},
                      {"observed", chk.observed},
                      {"passed", chk.passed},
                      {"detail", chk.detail}});
    trows.push_back({chk.passed ? "PASS" : "FAIL", chk.name, chk.tolerance, format6(chk.observed)});
  }
  json j = meta(c, report.wall_seconds);
  j["all_passed"] = report.all_passed();
  j["checks"] = checks;
  write_json(dir / "verify_summary.json", j);
  write_file_atomic(dir / "verify_report.txt", table({"status", "check", "tolerance", "observed"}, trows));
}

}  // namespace moebl
