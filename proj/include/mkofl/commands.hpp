#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mkofl/config.hpp"
#include "mkofl/evaluation.hpp"

namespace mkofl {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct RunOptions {
  std::string config_path;  // empty: built-in defaults
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::optional<std::size_t> trials;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algorithm;
  std::optional<std::string> dataset_path;
  bool verbose_trace = false;
  std::vector<std::string> command_line;
};

// Config file, then --set overrides, then the dedicated flags.
ExperimentConfig resolve_config(const RunOptions& opts);

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);

struct CompareOptions {
  std::vector<std::string> config_paths;
  std::vector<std::string> overrides;  // applied to every config
  std::string out_dir = "compare";
  bool sk_sweep = false;    // add sk_ofl for every kernel, derived from the first config
  bool with_naive = false;  // add naive_mk derived from the first config
  std::optional<std::size_t> trials;
  std::optional<std::uint64_t> seed;
};

int cmd_compare(const CompareOptions& opts, std::ostream& out, std::ostream& err);

struct OracleOptions {
  std::string trace_dir;
  std::string config_path;  // empty: the snapshot in <trace_dir>/manifest.json
  std::size_t trial = 1;    // one-based
  std::size_t frozen_states = 10;
  std::size_t resamples = 100000;
  std::string out_dir;  // empty: trace_dir
};

int cmd_oracle(const OracleOptions& opts, std::ostream& out, std::ostream& err);

// Building blocks shared with the tests.
struct OracleResult {
  RegretReport regret;
  std::vector<std::vector<double>> central_pmf;  // empty when not applicable
  std::vector<std::vector<double>> network_pmf;
  std::vector<double> tv;
  std::vector<std::size_t> martingale_rounds;
  std::vector<MartingaleReport> martingale;
};

}  // namespace mkofl
