#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mkofl/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-kernel online federated learning experiments"};
  app.set_version_flag("--version", MKOFL_VERSION);
  app.require_subcommand(1);

  mkofl::RunOptions run;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::string algo, dataset;
  auto* run_cmd = app.add_subcommand("run", "Run one configuration and write its traces");
  run_cmd->add_option("--config", run.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  run_cmd->add_option("--set", run.overrides, "Override a config key, e.g. --set lambda=0.1");
  run_cmd->add_option("--out", run.out_dir, "Output directory")->capture_default_str();
  auto* trials_opt = run_cmd->add_option("--trials", trials, "Number of independent trials")->check(CLI::PositiveNumber);
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Master seed");
  auto* algo_opt = run_cmd->add_option("--algo", algo, "sk_ofl | mk_ofl | naive_mk | central_omkl");
  auto* data_opt = run_cmd->add_option("--dataset", dataset, "CSV file to use instead of the configured dataset");
  run_cmd->add_flag("--verbose-trace", run.verbose_trace, "Also write per-node detail (needed by oracle)");

  mkofl::CompareOptions cmp;
  std::size_t cmp_trials = 0;
  std::uint64_t cmp_seed = 0;
  auto* cmp_cmd = app.add_subcommand("compare", "Run several configurations on the same data");
  cmp_cmd->add_option("--config", cmp.config_paths, "Experiment config (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  cmp_cmd->add_option("--set", cmp.overrides, "Override applied to every config");
  cmp_cmd->add_option("--out", cmp.out_dir, "Output directory")->capture_default_str();
  cmp_cmd->add_flag("--with-sk-all", cmp.sk_sweep, "Add a single-kernel run for every kernel");
  cmp_cmd->add_flag("--with-naive", cmp.with_naive, "Add the full-exchange baseline");
  auto* cmp_trials_opt = cmp_cmd->add_option("--trials", cmp_trials, "Trials per run")->check(CLI::PositiveNumber);
  auto* cmp_seed_opt = cmp_cmd->add_option("--seed", cmp_seed, "Master seed for every run");

  mkofl::OracleOptions orc;
  auto* orc_cmd = app.add_subcommand("oracle", "Regret, network PMF and martingale checks on a saved trace");
  orc_cmd->add_option("trace_dir", orc.trace_dir, "Directory written by `run --verbose-trace`")->required();
  orc_cmd->add_option("--config", orc.config_path, "Config to use instead of the manifest snapshot");
  orc_cmd->add_option("--trial", orc.trial, "Trial to analyse (one-based)")->capture_default_str();
  orc_cmd->add_option("--states", orc.frozen_states, "Frozen states for the martingale check")->capture_default_str();
  orc_cmd->add_option("--resamples", orc.resamples, "Resamples per frozen state")->capture_default_str();
  orc_cmd->add_option("--out", orc.out_dir, "Output directory (default: the trace directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mkofl::kExitConfig;
  }

  if (*run_cmd) {
    if (*trials_opt) run.trials = trials;
    if (*seed_opt) run.seed = seed;
    if (*algo_opt) run.algorithm = algo;
    if (*data_opt) run.dataset_path = dataset;
    run.command_line.assign(argv, argv + argc);
    return mkofl::cmd_run(run, std::cout, std::cerr);
  }
  if (*cmp_cmd) {
    if (*cmp_trials_opt) cmp.trials = cmp_trials;
    if (*cmp_seed_opt) cmp.seed = cmp_seed;
    return mkofl::cmd_compare(cmp, std::cout, std::cerr);
  }
  return mkofl::cmd_oracle(orc, std::cout, std::cerr);
}
