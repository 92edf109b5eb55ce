#include "mkofl/data_pipeline.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "mkofl/errors.hpp"
#include "mkofl/rng.hpp"

namespace mkofl {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == delim && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> rows;
};

Table read_table(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open dataset file: " + path);
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line, opts.delimiter);
    if (first && opts.header) {
      t.names = std::move(cells);
      first = false;
      continue;
    }
    first = false;
    t.rows.push_back(std::move(cells));
  }
  if (!opts.header) {
    std::size_t width = 0;
    for (const auto& r : t.rows) width = std::max(width, r.size());
    for (std::size_t i = 0; i < width; ++i) t.names.push_back(std::to_string(i));
  }
  return t;
}

std::size_t resolve_column(const Table& t, const std::string& name, const std::string& path) {
  const auto it = std::find(t.names.begin(), t.names.end(), name);
  if (it != t.names.end()) return static_cast<std::size_t>(it - t.names.begin());
  if (auto idx = parse_number(name); idx && *idx >= 0 && std::floor(*idx) == *idx &&
                                     static_cast<std::size_t>(*idx) < t.names.size()) {
    return static_cast<std::size_t>(*idx);
  }
  throw IngestionError("column '" + name + "' not found in " + path);
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvOptions& opts) {
  const Table t = read_table(path, opts);
  if (opts.label_column.empty()) throw IngestionError("no label column given for " + path);
  const std::size_t label = resolve_column(t, opts.label_column, path);
  std::vector<std::size_t> features;
  if (opts.feature_columns.empty()) {
    for (std::size_t i = 0; i < t.names.size(); ++i)
      if (i != label) features.push_back(i);
  } else {
    for (const auto& f : opts.feature_columns) features.push_back(resolve_column(t, f, path));
  }
  if (features.empty()) throw IngestionError("no feature columns in " + path);

  std::vector<std::vector<double>> keep;
  std::vector<double> labels;
  std::size_t dropped = 0;
  for (const auto& row : t.rows) {
    std::vector<double> x;
    x.reserve(features.size());
    bool ok = label < row.size();
    std::optional<double> yv = ok ? parse_number(row[label]) : std::nullopt;
    ok = ok && yv.has_value();
    for (std::size_t c : features) {
      if (!ok) break;
      auto v = c < row.size() ? parse_number(row[c]) : std::nullopt;
      if (!v) ok = false;
      else x.push_back(*v);
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    keep.push_back(std::move(x));
    labels.push_back(*yv);
  }
  if (keep.empty()) throw IngestionError("no numeric rows in " + path);

  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(features.size()));
  ds.y.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    for (std::size_t j = 0; j < features.size(); ++j) ds.X(i, j) = keep[i][j];
    ds.y[i] = labels[i];
  }
  std::vector<std::string> feature_names;
  for (auto c : features) feature_names.push_back(t.names[c]);
  ds.provenance = {{"source", path},
                   {"label_column", t.names[label]},
                   {"feature_columns", feature_names},
                   {"rows_read", t.rows.size()},
                   {"dropped_rows", dropped}};
  return ds;
}

std::vector<double> load_series(const std::string& path, const std::string& column,
                                const CsvOptions& opts, std::size_t* dropped) {
  const Table t = read_table(path, opts);
  const std::size_t col = resolve_column(t, column, path);
  std::vector<double> out;
  std::size_t bad = 0;
  for (const auto& row : t.rows) {
    auto v = col < row.size() ? parse_number(row[col]) : std::nullopt;
    if (v) out.push_back(*v);
    else ++bad;
  }
  if (out.empty()) throw IngestionError("no numeric rows in column '" + column + "' of " + path);
  if (dropped) *dropped = bad;
  return out;
}

void write_csv(const Dataset& ds, const std::string& path, char delimiter) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path);
  out << std::setprecision(17);
  for (std::size_t j = 0; j < ds.dim(); ++j) out << 'x' << j << delimiter;
  out << "y\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ds.X(i, j) << delimiter;
    out << ds.y[i] << '\n';
  }
}

namespace {
struct Range {
  double lo, hi;
};
Range column_range(const auto& col) { return {col.minCoeff(), col.maxCoeff()}; }
double scale01(double v, Range r) { return r.hi > r.lo ? (v - r.lo) / (r.hi - r.lo) : 0.0; }
}  // namespace

Dataset normalize_minmax(Dataset ds, bool features) {
  if (ds.size() < 2) throw ConfigError("normalization needs at least two rows");
  nlohmann::json params;
  if (features) {
    auto& fp = params["features"] = nlohmann::json::array();
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
      const Range r = column_range(ds.X.col(j));
      for (Eigen::Index i = 0; i < ds.X.rows(); ++i) ds.X(i, j) = scale01(ds.X(i, j), r);
      fp.push_back({{"min", r.lo}, {"max", r.hi}});
    }
  }
  const Range r = column_range(ds.y);
  for (Eigen::Index i = 0; i < ds.y.size(); ++i) ds.y[i] = scale01(ds.y[i], r);
  params["label"] = {{"min", r.lo}, {"max", r.hi}};
  ds.provenance["normalization"] = params;
  return ds;
}

std::vector<double> normalize_series(std::span<const double> series, double* lo, double* hi) {
  if (series.size() < 2) throw ConfigError("normalization needs at least two values");
  const auto [mn, mx] = std::minmax_element(series.begin(), series.end());
  const Range r{*mn, *mx};
  std::vector<double> out(series.size());
  std::transform(series.begin(), series.end(), out.begin(), [&](double v) { return scale01(v, r); });
  if (lo) *lo = r.lo;
  if (hi) *hi = r.hi;
  return out;
}

Dataset ar_featurize(std::span<const double> series, std::size_t lag) {
  if (lag < 1) throw ConfigError("AR lag order must be at least 1");
  if (series.size() <= lag) {
    throw ConfigError("AR(" + std::to_string(lag) + ") needs more than " + std::to_string(lag) +
                      " values, series has " + std::to_string(series.size()));
  }
  const std::size_t n = series.size() - lag;
  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(lag));
  ds.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = i + lag;
    for (std::size_t j = 0; j < lag; ++j) ds.X(i, j) = series[t - 1 - j];
    ds.y[i] = series[t];
  }
  ds.provenance = {{"source", "ar_featurize"}, {"lag", lag}};
  return ds;
}

NodeStreams partition(const Dataset& ds, std::size_t num_nodes, std::size_t num_rounds,
                      std::uint64_t seed, bool shuffle) {
  if (num_nodes < 1 || num_rounds < 1) throw ConfigError("partition needs K >= 1 and T >= 1");
  const std::size_t need = num_nodes * num_rounds;
  if (ds.size() < need) {
    throw ConfigError("dataset has " + std::to_string(ds.size()) + " rows but K*T = " +
                      std::to_string(need) + "; the largest feasible T for K = " +
                      std::to_string(num_nodes) + " is " + std::to_string(ds.size() / num_nodes));
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Rng rng = make_rng(seed, Stream::kData, 0);
    std::shuffle(order.begin(), order.end(), rng);
  }
  NodeStreams s;
  s.num_nodes = num_nodes;
  s.num_rounds = num_rounds;
  s.samples.reserve(need);
  for (std::size_t i = 0; i < need; ++i) {
    const std::size_t row = order[i];
    s.samples.push_back(Sample{row, ds.X.row(static_cast<Eigen::Index>(row)).transpose(), ds.y[row]});
  }
  return s;
}

Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t seed) {
  if (!(spec.bandwidth_sq > 0.0)) throw ConfigError("synthetic bandwidth must be positive");
  if (spec.dim < 1 || spec.generator_features < 1) throw ConfigError("synthetic dim and feature count must be >= 1");
  const SpectralSample generator(
      0, draw_gaussian_frequencies(spec.bandwidth_sq, spec.generator_features, spec.dim,
                                   derive_seed(seed, Stream::kSynthetic, 0)));
  Rng rng = make_rng(seed, Stream::kSynthetic, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Vector w(static_cast<Eigen::Index>(generator.feature_dim()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = normal(rng);

  // Standardize w*'z* over a fixed reference sample so that offset and
  // amplitude mean the same thing for every draw of w*, independent of n.
  Rng ref_rng = make_rng(seed, Stream::kSynthetic, 2);
  double ref_sum = 0.0, ref_sq = 0.0;
  Vector xr(static_cast<Eigen::Index>(spec.dim));
  for (std::size_t i = 0; i < kSyntheticReferencePoints; ++i) {
    for (Eigen::Index j = 0; j < xr.size(); ++j) xr[j] = unit(ref_rng);
    const double f = w.dot(generator.map(xr));
    ref_sum += f;
    ref_sq += f * f;
  }
  const double n_ref = static_cast<double>(kSyntheticReferencePoints);
  const double latent_mean = ref_sum / n_ref;
  const double latent_sd = std::sqrt(std::max(ref_sq / n_ref - latent_mean * latent_mean, 1e-300));

  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(spec.n), static_cast<Eigen::Index>(spec.dim));
  ds.y.resize(static_cast<Eigen::Index>(spec.n));
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t j = 0; j < spec.dim; ++j) ds.X(i, j) = unit(rng);
    const double f = (w.dot(generator.map(ds.X.row(i).transpose())) - latent_mean) / latent_sd;
    const double clean = spec.offset + spec.amplitude * f;
    const double noisy = clean + spec.noise_sd * normal(rng);
    ds.y[i] = std::clamp(noisy, 0.0, 1.0);
  }
  ds.provenance = {{"source", "synthetic"},
                   {"bandwidth_sq", spec.bandwidth_sq},
                   {"dim", spec.dim},
                   {"noise_sd", spec.noise_sd},
                   {"amplitude", spec.amplitude},
                   {"offset", spec.offset},
                   {"generator_features", spec.generator_features},
                   {"latent_mean", latent_mean},
                   {"latent_sd", latent_sd},
                   {"seed", seed}};
  return ds;
}

void write_normalization_sidecar(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path);
  out << ds.provenance.dump(2) << '\n';
}

}  // namespace mkofl
