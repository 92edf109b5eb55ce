#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace mkofl {

using Vector = Eigen::VectorXd;
using FeatureVector = Eigen::VectorXd;

// Zero-based position of a kernel inside a dictionary. Files and reports use
// the one-based numbering (kernel 1 .. P).
using KernelId = std::size_t;

// Bandwidth of the p-th dictionary kernel (one-based p): 10^(p-6).
double dictionary_bandwidth_sq(std::size_t one_based_index);

/// kappa(x, x') = exp(-||x - x'||^2 / (2 sigma^2)).
struct GaussianKernel {
  std::size_t index = 1;  // one-based
  double bandwidth_sq = 1.0;

  double evaluate(const Vector& x, const Vector& x_prime) const;
};

/// D spectral frequencies (rows) for one kernel. The embedding is
///   z(x) = D^{-1/2} [sin(v_1'x) .. sin(v_D'x), cos(v_1'x) .. cos(v_D'x)]
/// which always has unit Euclidean norm.
class SpectralSample {
 public:
  SpectralSample() = default;
  SpectralSample(KernelId kernel, Eigen::MatrixXd frequencies);

  KernelId kernel() const { return kernel_; }
  std::size_t num_features() const { return static_cast<std::size_t>(frequencies_.rows()); }
  std::size_t feature_dim() const { return 2 * num_features(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(frequencies_.cols()); }
  const Eigen::MatrixXd& frequencies() const { return frequencies_; }

  FeatureVector map(const Vector& x) const;

 private:
  KernelId kernel_ = 0;
  Eigen::MatrixXd frequencies_;
};

/// Throws ShapeError when x does not have the sample's input dimension.
FeatureVector feature_map(const SpectralSample& sample, const Vector& x);

/// Draws a D x d frequency matrix for a Gaussian kernel: rows ~ N(0, I / sigma^2).
/// Rows are drawn in order, so a smaller D yields a prefix of a larger draw.
Eigen::MatrixXd draw_gaussian_frequencies(double bandwidth_sq, std::size_t num_features,
                                          std::size_t input_dim, std::uint64_t seed);

/// The shared set of P Gaussian kernels with their spectral samples. Immutable
/// once built; every node and the server read the same instance.
class KernelDictionary {
 public:
  static constexpr int kFormatVersion = 1;

  static KernelDictionary build(std::size_t num_kernels, std::size_t num_features,
                                std::size_t input_dim, std::uint64_t seed);

  std::size_t size() const { return kernels_.size(); }
  std::size_t num_features() const { return num_features_; }
  std::size_t feature_dim() const { return 2 * num_features_; }
  std::size_t input_dim() const { return input_dim_; }
  std::uint64_t seed() const { return seed_; }

  const GaussianKernel& kernel(KernelId p) const { return kernels_.at(p); }
  const SpectralSample& sample(KernelId p) const { return samples_.at(p); }

  FeatureVector features(KernelId p, const Vector& x) const;
  std::vector<FeatureVector> all_features(const Vector& x) const;

  // Index of the kernel whose bandwidth matches within a relative tolerance.
  std::optional<KernelId> find_bandwidth(double bandwidth_sq, double rel_tol = 1e-9) const;

  nlohmann::json to_json() const;
  static KernelDictionary from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static KernelDictionary load(const std::string& path);

 private:
  std::vector<GaussianKernel> kernels_;
  std::vector<SpectralSample> samples_;
  std::size_t num_features_ = 0;
  std::size_t input_dim_ = 0;
  std::uint64_t seed_ = 0;
};

}  // namespace mkofl
