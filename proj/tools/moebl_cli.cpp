// moebl: run the boundary-layer experiments and the invariant suite.
//
//   moebl exp1|exp2|exp3|verify [--config PATH] [--out DIR] [--seed U64] [--samples N]
//
// Exit status: 0 ok, 1 invalid config, 2 invariant failure, 3 numerical failure.

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "moebl/experiments.hpp"
#include "moebl/numerics.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kBadConfig = 1;
constexpr int kInvariant = 2;
constexpr int kNumerical = 3;

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
};

int run(moebl::ExperimentId id, const Flags& f) {
  using namespace moebl;
  ExperimentConfig cfg = ExperimentConfig::defaults(id);
  if (!f.config.empty()) cfg.apply_json_file(f.config);
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.seed) cfg.seed = *f.seed;
  if (f.samples) cfg.n = *f.samples;
  cfg.validate();

  switch (id) {
    case ExperimentId::exp1: {
      const Exp1Result r = run_exp1(cfg);
      write_exp1(r, cfg);
      std::cout << exp1_csv(r) << "slope_mass " << format6(r.slope_mass) << "  slope_gap " << format6(r.slope_gap)
                << "  corr " << format6(r.correlation) << '\n';
      return kOk;
    }
    case ExperimentId::exp2: {
      const Exp2Result r = run_exp2(cfg);
      write_exp2(r, cfg);
      std::cout << exp2_csv(r) << "corr_gap " << format6(r.corr_gap_mass) << "  corr_flip "
                << format6(r.corr_flip_mass) << '\n';
      return kOk;
    }
    case ExperimentId::exp3: {
      const Exp3Result r = run_exp3(cfg);
      write_exp3(r, cfg);
      std::cout << exp3_csv(r);
      if (r.any_diverged) {
        std::cerr << "exp3: router training diverged for at least one temperature\n";
        return kNumerical;
      }
      return kOk;
    }
    case ExperimentId::verify: {
      const VerifyReport r = run_verify(cfg);
      write_verify(r, cfg);
      for (const auto& c : r.checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  [" << c.tolerance << "]  observed "
                  << format6(c.observed) << (c.detail.empty() ? "" : "  (" + c.detail + ")") << '\n';
      std::cout << (r.all_passed() ? "all checks passed" : "some checks FAILED") << '\n';
      return r.all_passed() ? kOk : kInvariant;
    }
  }
  return kBadConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary-layer diagnostics for soft/hard mixture-of-experts routing"};
  app.require_subcommand(1);
  Flags flags;
  for (const char* name : {"exp1", "exp2", "exp3", "verify"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run ") + name);
    sub->add_option("--config", flags.config, "flat JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { flags.seed = v; },
                                            "RNG seed");
    sub->add_option_function<std::size_t>("--samples", [&](const std::size_t& v) { flags.samples = v; },
                                          "Monte Carlo sample size");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(moebl::parse_experiment_id(name), flags);
  } catch (const moebl::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kBadConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kBadConfig;
  } catch (const moebl::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}
