#include "decplan/checks.hpp"
#include "decplan/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <thread>

namespace {

enum Exit { kOk = 0, kConfigError = 1, kPartial = 2, kTotal = 3 };

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed_base, int workers,
            const std::optional<std::string>& output, bool overwrite) {
  decplan::ExperimentConfig cfg;
  try {
    cfg = decplan::load_config(path);
    if (seed_base) cfg.seed_base = *seed_base;
    if (output) cfg.output = *output;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  const auto dir = decplan::run_directory(cfg);
  if (std::filesystem::exists(dir) && !overwrite) {
    std::cerr << "output directory '" << dir.string() << "' already exists (use --overwrite)\n";
    return kConfigError;
  }
  decplan::ExperimentResult res;
  try {
    res = decplan::run_experiment(cfg, workers);
    decplan::write_results(dir, res, overwrite);
  } catch (const decplan::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kTotal;
  }
  std::printf("%-34s %10s %10s %10s %10s %9s\n", "controller", "value", "J/J*", "var", "replans", "failed");
  for (const auto& row : res.rows) {
    const auto& s = row.result.summary;
    std::printf("%-34s %10g %10.5f %10.3g %10.2f %4d/%-4d\n", row.controller.label().c_str(), row.value, s.mean_ratio,
                s.var_ratio, s.mean_replans, s.failures, s.episodes);
  }
  std::printf("nominal cost %.6f\nwrote %s\n", res.nominal_cost, dir.string().c_str());
  if (res.failures() == 0) return kOk;
  std::cerr << res.failures() << " of " << res.episodes() << " episodes failed\n";
  return res.failures() == res.episodes() ? kTotal : kPartial;
}

int cmd_report(const std::string& dir) {
  try {
    for (const auto& f : decplan::write_report(dir)) std::printf("wrote %s\n", f.string().c_str());
  } catch (const std::exception& e) {
    std::cerr << "report error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}

int cmd_check() {
  const auto results = decplan::run_checks();
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%s  %-40s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    failed += r.passed ? 0 : 1;
  }
  if (failed == 0) return kOk;
  return failed == static_cast<int>(results.size()) ? kTotal : kPartial;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupled planning experiments: trajectory optimization with LQR tracking and replanning"};
  app.require_subcommand(1);

  std::string config_path, results_dir;
  std::optional<std::uint64_t> seed_base;
  std::optional<std::string> output;
  int workers = std::max(1u, std::thread::hardware_concurrency());
  bool overwrite = false;

  auto* run = app.add_subcommand("run", "run the sweep described by a config file");
  run->add_option("config", config_path, "experiment config (YAML)")->required();
  run->add_option("--seed-base", seed_base, "override the config's seed base");
  run->add_option("--workers", workers, "episode worker threads")->check(CLI::PositiveNumber);
  run->add_option("--output", output, "override the output root directory");
  run->add_flag("--overwrite", overwrite, "replace an existing run directory");

  auto* report = app.add_subcommand("report", "write plot-ready series from a run directory");
  report->add_option("dir", results_dir, "run directory")->required();

  auto* check = app.add_subcommand("check", "run the built-in invariant and oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }
  if (run->parsed()) return cmd_run(config_path, seed_base, workers, output, overwrite);
  if (report->parsed()) return cmd_report(results_dir);
  if (check->parsed()) return cmd_check();
  return kConfigError;
}
