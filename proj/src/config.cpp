#include "mkofl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "mkofl/errors.hpp"

namespace mkofl {

namespace {

const std::set<std::string> kTopKeys = {
    "algorithm", "nodes",   "rounds",    "kernels",   "budget",      "features",     "lambda",
    "radius",    "clip_for_hedge", "schedule", "eta_local", "eta_global", "seed", "data_seed",
    "trials",    "sk_kernel", "burn_in", "best_kernel", "verbose_trace", "threads", "dataset"};

const std::set<std::string> kDatasetKeys = {
    "kind",    "bandwidth_sq", "dim",      "noise_sd", "amplitude", "offset", "path",
    "label_column", "feature_columns", "delimiter", "header", "ar_order",
    "normalize_features", "normalize_label"};

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::size_t get_count(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kSkOfl: return "sk_ofl";
    case Algorithm::kMkOfl: return "mk_ofl";
    case Algorithm::kNaiveMk: return "naive_mk";
    case Algorithm::kCentralOmkl: return "central_omkl";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "sk_ofl") return Algorithm::kSkOfl;
  if (s == "mk_ofl") return Algorithm::kMkOfl;
  if (s == "naive_mk") return Algorithm::kNaiveMk;
  if (s == "central_omkl") return Algorithm::kCentralOmkl;
  throw ConfigError("unknown algorithm '" + s + "' (expected sk_ofl, mk_ofl, naive_mk, central_omkl)");
}

std::string to_string(StepSchedule s) { return s == StepSchedule::kAnytime ? "anytime" : "fixed"; }

StepSchedule parse_schedule(const std::string& s) {
  if (s == "anytime") return StepSchedule::kAnytime;
  if (s == "fixed") return StepSchedule::kFixed;
  throw ConfigError("unknown step schedule '" + s + "' (expected anytime or fixed)");
}

std::size_t ExperimentConfig::resolved_features() const {
  if (num_features != 0) return num_features;
  const std::size_t half = budget / 2;
  if (algorithm == Algorithm::kSkOfl) return half;
  return half >= 1 ? half - 1 : 0;
}

double ExperimentConfig::eta_global_numerator() const {
  return eta_global ? *eta_global : std::log(static_cast<double>(num_kernels));
}

std::size_t ExperimentConfig::uplink_scalars_per_node() const {
  const std::size_t D = resolved_features();
  switch (algorithm) {
    case Algorithm::kSkOfl: return 2 * D;
    case Algorithm::kMkOfl: return 2 * D + 1;
    case Algorithm::kNaiveMk: return num_kernels * (2 * D) + num_kernels;
    case Algorithm::kCentralOmkl: return 0;
  }
  return 0;
}

std::size_t ExperimentConfig::downlink_scalars_per_node() const { return uplink_scalars_per_node(); }

void ExperimentConfig::validate() const {
  if (num_nodes < 1) throw ConfigError("nodes (K) must be >= 1");
  if (num_kernels < 1) throw ConfigError("kernels (P) must be >= 1");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  const std::size_t D = resolved_features();
  if (D < 1) throw ConfigError("feature count D resolves to 0; raise the budget r or set features");
  if (num_features != 0) {
    if (algorithm == Algorithm::kMkOfl && 2 * num_features + 1 > budget) {
      throw ConfigError("mk_ofl with D = " + std::to_string(num_features) + " exceeds the budget r = " +
                        std::to_string(budget) + " (needs D <= floor(r/2) - 1)");
    }
    if (algorithm == Algorithm::kSkOfl && 2 * num_features > budget) {
      throw ConfigError("sk_ofl with D = " + std::to_string(num_features) + " exceeds the budget r = " +
                        std::to_string(budget) + " (needs D <= floor(r/2))");
    }
  }
  if (algorithm == Algorithm::kSkOfl && (sk_kernel < 1 || sk_kernel > num_kernels)) {
    throw ConfigError("sk_kernel must lie in [1, P]");
  }
  if (best_kernel && (*best_kernel < 1 || *best_kernel > num_kernels)) {
    throw ConfigError("best_kernel must lie in [1, P]");
  }
  if (!(loss.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(loss.radius > 0.0)) throw ConfigError("radius must be > 0");
  if (!(eta_local > 0.0)) throw ConfigError("eta_local must be > 0");
  if (eta_global && !(*eta_global >= 0.0)) throw ConfigError("eta_global must be >= 0");
  if (num_rounds != 0 && burn_in >= num_rounds) throw ConfigError("burn_in must be smaller than rounds");
  if (dataset.kind == DatasetKind::kSynthetic) {
    if (!(dataset.bandwidth_sq > 0.0)) throw ConfigError("dataset.bandwidth_sq must be > 0");
    if (dataset.dim < 1) throw ConfigError("dataset.dim must be >= 1");
    if (num_rounds == 0) throw ConfigError("synthetic datasets need an explicit number of rounds");
  } else {
    if (dataset.path.empty()) throw ConfigError("dataset.path is required for csv and series datasets");
    if (dataset.label_column.empty()) throw ConfigError("dataset.label_column is required");
    if (dataset.kind == DatasetKind::kSeries && dataset.ar_order < 1) {
      throw ConfigError("dataset.ar_order must be >= 1");
    }
  }
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json ds;
  const auto& d = cfg.dataset;
  switch (d.kind) {
    case DatasetKind::kSynthetic:
      ds = {{"kind", "synthetic"}, {"bandwidth_sq", d.bandwidth_sq}, {"dim", d.dim},
            {"noise_sd", d.noise_sd}, {"amplitude", d.amplitude}, {"offset", d.offset}};
      break;
    case DatasetKind::kCsv:
      ds = {{"kind", "csv"}, {"path", d.path}, {"label_column", d.label_column},
            {"feature_columns", d.feature_columns}, {"delimiter", std::string(1, d.delimiter)},
            {"header", d.header}, {"normalize_features", d.normalize_features},
            {"normalize_label", d.normalize_label}};
      break;
    case DatasetKind::kSeries:
      ds = {{"kind", "series"}, {"path", d.path}, {"label_column", d.label_column},
            {"delimiter", std::string(1, d.delimiter)}, {"header", d.header},
            {"ar_order", d.ar_order}, {"normalize_label", d.normalize_label}};
      break;
  }
  nlohmann::json j = {
      {"algorithm", to_string(cfg.algorithm)},
      {"nodes", cfg.num_nodes},
      {"rounds", cfg.num_rounds},
      {"kernels", cfg.num_kernels},
      {"budget", cfg.budget},
      {"features", cfg.num_features},
      {"lambda", cfg.loss.lambda},
      {"radius", cfg.loss.projects() ? nlohmann::json(cfg.loss.radius) : nlohmann::json(nullptr)},
      {"clip_for_hedge", cfg.loss.clip_for_hedge},
      {"schedule", to_string(cfg.schedule)},
      {"eta_local", cfg.eta_local},
      {"eta_global", cfg.eta_global ? nlohmann::json(*cfg.eta_global) : nlohmann::json(nullptr)},
      {"seed", cfg.seed},
      {"data_seed", cfg.data_seed},
      {"trials", cfg.trials},
      {"sk_kernel", cfg.sk_kernel},
      {"burn_in", cfg.burn_in},
      {"best_kernel", cfg.best_kernel ? nlohmann::json(*cfg.best_kernel) : nlohmann::json(nullptr)},
      {"verbose_trace", cfg.verbose_trace},
      {"threads", cfg.threads},
      {"dataset", ds}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kTopKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig cfg;
  cfg.algorithm = parse_algorithm(get_or<std::string>(j, "algorithm", "mk_ofl"));
  cfg.num_nodes = get_count(j, "nodes", cfg.num_nodes);
  cfg.num_rounds = get_count(j, "rounds", cfg.num_rounds);
  cfg.num_kernels = get_count(j, "kernels", cfg.num_kernels);
  cfg.budget = get_count(j, "budget", cfg.budget);
  cfg.num_features = get_count(j, "features", cfg.num_features);
  cfg.loss.lambda = get_or<double>(j, "lambda", cfg.loss.lambda);
  cfg.loss.radius = get_or<double>(j, "radius", cfg.loss.radius);
  cfg.loss.clip_for_hedge = get_or<bool>(j, "clip_for_hedge", cfg.loss.clip_for_hedge);
  cfg.schedule = parse_schedule(get_or<std::string>(j, "schedule", "anytime"));
  cfg.eta_local = get_or<double>(j, "eta_local", cfg.eta_local);
  if (j.contains("eta_global") && !j.at("eta_global").is_null()) cfg.eta_global = get_or<double>(j, "eta_global", 0.0);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.data_seed = get_or<std::uint64_t>(j, "data_seed", cfg.data_seed);
  cfg.trials = get_count(j, "trials", cfg.trials);
  cfg.sk_kernel = get_count(j, "sk_kernel", cfg.sk_kernel);
  cfg.burn_in = get_count(j, "burn_in", cfg.burn_in);
  if (j.contains("best_kernel") && !j.at("best_kernel").is_null()) cfg.best_kernel = get_count(j, "best_kernel", 1);
  cfg.verbose_trace = get_or<bool>(j, "verbose_trace", cfg.verbose_trace);
  cfg.threads = get_count(j, "threads", cfg.threads);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (!d.is_object()) throw ConfigError("dataset must be an object");
    for (const auto& [key, _] : d.items()) {
      if (!kDatasetKeys.count(key)) throw ConfigError("unknown dataset key '" + key + "'");
    }
    auto& ds = cfg.dataset;
    const auto kind = get_or<std::string>(d, "kind", "synthetic");
    if (kind == "synthetic") ds.kind = DatasetKind::kSynthetic;
    else if (kind == "csv") ds.kind = DatasetKind::kCsv;
    else if (kind == "series") ds.kind = DatasetKind::kSeries;
    else throw ConfigError("unknown dataset kind '" + kind + "' (expected synthetic, csv, series)");
    ds.bandwidth_sq = get_or<double>(d, "bandwidth_sq", ds.bandwidth_sq);
    ds.dim = get_count(d, "dim", ds.dim);
    ds.noise_sd = get_or<double>(d, "noise_sd", ds.noise_sd);
    ds.amplitude = get_or<double>(d, "amplitude", ds.amplitude);
    ds.offset = get_or<double>(d, "offset", ds.offset);
    ds.path = get_or<std::string>(d, "path", ds.path);
    ds.label_column = get_or<std::string>(d, "label_column", ds.label_column);
    ds.feature_columns = get_or<std::vector<std::string>>(d, "feature_columns", ds.feature_columns);
    const auto delim = get_or<std::string>(d, "delimiter", ",");
    if (delim.size() != 1) throw ConfigError("dataset.delimiter must be a single character");
    ds.delimiter = delim[0];
    ds.header = get_or<bool>(d, "header", ds.header);
    ds.ar_order = get_count(d, "ar_order", ds.ar_order);
    ds.normalize_features = get_or<bool>(d, "normalize_features", ds.normalize_features);
    ds.normalize_label = get_or<bool>(d, "normalize_label", ds.normalize_label);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  std::string pointer = "/" + key;
  for (auto& c : pointer)
    if (c == '.') c = '/';
  j[nlohmann::json::json_pointer(pointer)] = value;
}

Dataset materialize_dataset(const DatasetSpec& spec, std::size_t rows_needed, std::uint64_t data_seed) {
  switch (spec.kind) {
    case DatasetKind::kSynthetic: {
      SyntheticSpec s;
      s.bandwidth_sq = spec.bandwidth_sq;
      s.n = rows_needed;
      s.dim = spec.dim;
      s.noise_sd = spec.noise_sd;
      s.amplitude = spec.amplitude;
      s.offset = spec.offset;
      return synth_generate(s, data_seed);
    }
    case DatasetKind::kCsv: {
      CsvOptions opts;
      opts.delimiter = spec.delimiter;
      opts.header = spec.header;
      opts.label_column = spec.label_column;
      opts.feature_columns = spec.feature_columns;
      Dataset ds = load_csv(spec.path, opts);
      if (spec.normalize_label || spec.normalize_features) {
        const auto y_raw = ds.y;
        ds = normalize_minmax(std::move(ds), spec.normalize_features);
        if (!spec.normalize_label) {
          ds.y = y_raw;
          ds.provenance["normalization"].erase("label");
        }
      }
      return ds;
    }
    case DatasetKind::kSeries: {
      CsvOptions opts;
      opts.delimiter = spec.delimiter;
      opts.header = spec.header;
      std::size_t dropped = 0;
      auto series = load_series(spec.path, spec.label_column, opts, &dropped);
      nlohmann::json norm = nullptr;
      if (spec.normalize_label) {
        double lo = 0, hi = 0;
        series = normalize_series(series, &lo, &hi);
        norm = {{"series", {{"min", lo}, {"max", hi}}}};
      }
      Dataset ds = ar_featurize(series, spec.ar_order);
      ds.provenance = {{"source", spec.path}, {"column", spec.label_column}, {"lag", spec.ar_order},
                       {"dropped_rows", dropped}, {"normalization", norm}};
      return ds;
    }
  }
  throw ConfigError("unhandled dataset kind");
}

}  // namespace mkofl
