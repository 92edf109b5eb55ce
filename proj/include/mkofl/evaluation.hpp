#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mkofl/data_pipeline.hpp"
#include "mkofl/objective.hpp"
#include "mkofl/rng.hpp"

namespace mkofl {

// Running MSE over rounds and nodes: entry t is the mean squared error of all
// predictions made in rounds 1..t. Inputs are indexed [round][node].
std::vector<double> mse_trace(const std::vector<std::vector<double>>& predictions,
                              const std::vector<std::vector<double>>& labels);

// Row i is z_p(x_i).
Eigen::MatrixXd feature_matrix(const KernelDictionary& dict, KernelId p, std::span<const Sample> samples);

struct HindsightSolution {
  ModelParams w;
  double loss = 0.0;  // sum_i (w'z_i - y_i)^2 + n lambda ||w||^2
  bool minimum_norm = false;
  bool projected = false;
};

// Exact minimizer of the cumulative regularized squared loss over the rows of
// Z via (Z'Z + n lambda I) w = Z'y. With lambda = 0 and a singular system the
// minimum-norm solution is returned. A finite radius that the unconstrained
// solution violates triggers projected-gradient refinement on the ball.
HindsightSolution best_hindsight(const Eigen::MatrixXd& Z, const Vector& y, double lambda,
                                 double radius = std::numeric_limits<double>::infinity());

double cumulative_loss(const ModelParams& w, const Eigen::MatrixXd& Z, const Vector& y, double lambda);

struct RegretReport {
  std::size_t rounds = 0;
  std::vector<double> hindsight_losses;  // per kernel
  double algorithm_loss = 0.0;
  KernelId comparator = 0;  // kernel the regret is measured against
  bool fixed_kernel = false;
  double regret = 0.0;
  double regret_over_sqrt_t = 0.0;
  double regret_over_t = 0.0;
  std::vector<double> per_kernel_gaps;  // algorithm_loss - hindsight_losses[p]
};

// Regret against the best kernel in hindsight, or against a fixed kernel for
// single-kernel runs.
RegretReport regret(double algorithm_loss, std::vector<double> hindsight_losses, std::size_t rounds,
                    std::optional<KernelId> fixed_kernel = std::nullopt);

// Loss history indexed [round][node][kernel].
using LossHistory = std::vector<std::vector<std::vector<double>>>;

struct CentralPmfTrace {
  std::vector<std::vector<double>> pmf;  // entry t: PMF after round t's losses
};

// log m(p) <- log m(p) - eta_global[t] * sum_k loss[t][k][p], from uniform.
CentralPmfTrace centralized_pmf(const LossHistory& losses, std::span<const double> eta_global, bool clip);

double total_variation(std::span<const double> a, std::span<const double> b);

// sum_k alpha_k q_k with alpha_k = c_{p_k}^{K-1} / sum_p c_p^K.
std::vector<double> network_pmf(std::span<const KernelId> proposals,
                                const std::vector<std::vector<double>>& node_pmfs);

// Fraction of trials whose selected kernel equals best at each round. Input is
// indexed [trial][round].
std::vector<double> selection_fraction(const std::vector<std::vector<KernelId>>& selections, KernelId best);

/// One node at one round, frozen: the PMF the server index is drawn from, the
/// node's per-kernel models and features, and the models evaluated for the
/// sampled index (by default the node's own models).
struct FrozenState {
  std::vector<double> pmf;
  std::vector<ModelParams> node_models;
  std::vector<ModelParams> sampled_models;
  std::vector<FeatureVector> features;
  double y = 0.0;
  double lambda = 0.0;
};

struct MartingaleReport {
  std::size_t resamples = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double exact_stddev = 0.0;  // sigma of X under the PMF
  double band = 0.0;          // 3 exact sigma / sqrt(N), plus a rounding floor
  bool within_band = false;
  double expected_mean = 0.0;  // exact E[X] under the PMF
};

// Draws I ~ pmf N times and averages
//   X = L(sampled_models[I]' z_I, y) - sum_p pmf(p) L(node_models[p]' z_p, y).
MartingaleReport martingale_check(const FrozenState& state, std::size_t resamples, Rng& rng);

}  // namespace mkofl
