#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mkofl/data_pipeline.hpp"
#include "mkofl/objective.hpp"

namespace mkofl {

enum class Algorithm { kSkOfl, kMkOfl, kNaiveMk, kCentralOmkl };
enum class StepSchedule { kAnytime, kFixed };
enum class DatasetKind { kSynthetic, kCsv, kSeries };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);
std::string to_string(StepSchedule s);
StepSchedule parse_schedule(const std::string& s);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kSynthetic;

  // synthetic
  double bandwidth_sq = 0.01;
  std::size_t dim = 1;
  double noise_sd = 0.2;
  double amplitude = 0.25;
  double offset = 0.25;

  // csv / series
  std::string path;
  std::string label_column;                  // csv label, or the series column
  std::vector<std::string> feature_columns;  // csv only; empty = all others
  char delimiter = ',';
  bool header = true;
  std::size_t ar_order = 5;  // series only
  bool normalize_features = true;
  bool normalize_label = true;

  // i.i.d. rows are shuffled before partitioning; time series never are.
  bool shuffled() const { return kind != DatasetKind::kSeries; }
};

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::kMkOfl;
  std::size_t num_nodes = 20;    // K
  std::size_t num_rounds = 500;  // T; 0 means as many as the data allows
  std::size_t num_kernels = 11;  // P
  std::size_t budget = 100;      // r, scalars per message
  std::size_t num_features = 0;  // D; 0 derives it from r
  LossConfig loss;
  StepSchedule schedule = StepSchedule::kAnytime;
  double eta_local = 1.0;                // local OGD rate: eta_local / sqrt(t or T)
  std::optional<double> eta_global;      // Hedge rate numerator; defaults to log P
  std::uint64_t seed = 1;                // algorithm randomness
  std::uint64_t data_seed = 1;           // data generation and shuffling
  std::size_t trials = 50;
  std::size_t sk_kernel = 1;             // one-based, sk_ofl only
  std::size_t burn_in = 0;               // rounds excluded from the MSE
  std::optional<std::size_t> best_kernel;  // one-based, for selection fractions
  bool verbose_trace = false;
  std::size_t threads = 0;               // 0 = hardware concurrency
  DatasetSpec dataset;

  // D actually used: explicit, or floor(r/2) for sk_ofl and floor(r/2) - 1 otherwise.
  std::size_t resolved_features() const;
  double eta_global_numerator() const;

  // Throws ConfigError on inconsistent settings.
  void validate() const;

  // Uplink scalars per node per round.
  std::size_t uplink_scalars_per_node() const;
  std::size_t downlink_scalars_per_node() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Applies a "dotted.key=value" override; value is parsed as JSON when it can
// be, otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Loads or generates the dataset described by the config and min-max
// normalizes it. rows_needed sizes synthetic data.
Dataset materialize_dataset(const DatasetSpec& spec, std::size_t rows_needed, std::uint64_t data_seed);

}  // namespace mkofl
