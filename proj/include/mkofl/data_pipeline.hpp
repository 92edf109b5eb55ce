#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mkofl/kernel_features.hpp"

namespace mkofl {

/// n x d inputs with n labels plus free-form provenance (source, scaling
/// parameters, dropped-row counts).
struct Dataset {
  Eigen::MatrixXd X;
  Vector y;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(X.cols()); }
};

struct CsvOptions {
  char delimiter = ',';
  bool header = true;
  // Column name (with a header) or zero-based position.
  std::string label_column;
  // Empty means every column except the label.
  std::vector<std::string> feature_columns;
};

// Rows with a missing or non-numeric field in a selected column are dropped;
// the count lands in provenance["dropped_rows"].
Dataset load_csv(const std::string& path, const CsvOptions& opts);

// A single numeric column in file order, same drop policy.
std::vector<double> load_series(const std::string& path, const std::string& column,
                                const CsvOptions& opts, std::size_t* dropped = nullptr);

void write_csv(const Dataset& ds, const std::string& path, char delimiter = ',');

// Per-column min-max scaling of features (optional) and label into [0, 1].
// Constant columns map to 0. Scaling parameters go to provenance["normalization"].
Dataset normalize_minmax(Dataset ds, bool features = true);
std::vector<double> normalize_series(std::span<const double> series, double* lo = nullptr,
                                     double* hi = nullptr);

// x_t = [y_{t-1}, ..., y_{t-s}], label y_t, for t = s .. n-1.
Dataset ar_featurize(std::span<const double> series, std::size_t lag);

struct Sample {
  std::size_t id = 0;  // row in the source dataset
  Vector x;
  double y = 0.0;
};

/// K streams of T samples; the sample of node k at round t (both zero-based)
/// is at(t, k).
struct NodeStreams {
  std::size_t num_nodes = 0;
  std::size_t num_rounds = 0;
  std::vector<Sample> samples;  // round-major

  const Sample& at(std::size_t t, std::size_t k) const { return samples[t * num_nodes + k]; }
  std::span<const Sample> round(std::size_t t) const {
    return std::span<const Sample>(samples).subspan(t * num_nodes, num_nodes);
  }
};

// Row (t * K + k) of the (optionally shuffled) dataset goes to node k at round t.
NodeStreams partition(const Dataset& ds, std::size_t num_nodes, std::size_t num_rounds,
                      std::uint64_t seed, bool shuffle = true);

// x ~ U[0,1]^d, y = clip01(offset + amplitude * f(x) + noise) where f is
// w*' z*(x) standardized to zero mean and unit variance over U[0,1]^d, z* is a
// 512-feature embedding of a Gaussian kernel with the given bandwidth and w*
// has i.i.d. standard normal entries.
inline constexpr std::size_t kSyntheticReferencePoints = 4096;
struct SyntheticSpec {
  double bandwidth_sq = 0.01;
  std::size_t n = 0;
  std::size_t dim = 1;
  double noise_sd = 0.2;
  double amplitude = 0.25;
  double offset = 0.25;
  std::size_t generator_features = 512;
};
Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t seed);

void write_normalization_sidecar(const Dataset& ds, const std::string& path);

}  // namespace mkofl
