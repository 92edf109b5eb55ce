#include "mkofl/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "mkofl/edge_node.hpp"
#include "mkofl/errors.hpp"

namespace mkofl {

std::vector<double> mse_trace(const std::vector<std::vector<double>>& predictions,
                              const std::vector<std::vector<double>>& labels) {
  if (predictions.size() != labels.size()) throw ShapeError("mse_trace: round counts differ");
  std::vector<double> out;
  out.reserve(predictions.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    if (predictions[t].size() != labels[t].size()) throw ShapeError("mse_trace: node counts differ");
    for (std::size_t k = 0; k < labels[t].size(); ++k) {
      const double e = predictions[t][k] - labels[t][k];
      sum += e * e;
    }
    count += labels[t].size();
    out.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }
  return out;
}

Eigen::MatrixXd feature_matrix(const KernelDictionary& dict, KernelId p, std::span<const Sample> samples) {
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(dict.feature_dim()));
  for (std::size_t i = 0; i < samples.size(); ++i) Z.row(static_cast<Eigen::Index>(i)) = dict.features(p, samples[i].x).transpose();
  return Z;
}

double cumulative_loss(const ModelParams& w, const Eigen::MatrixXd& Z, const Vector& y, double lambda) {
  const Vector r = Z * w - y;
  return r.squaredNorm() + static_cast<double>(Z.rows()) * lambda * w.squaredNorm();
}

HindsightSolution best_hindsight(const Eigen::MatrixXd& Z, const Vector& y, double lambda, double radius) {
  if (Z.rows() != y.size()) throw ShapeError("best_hindsight: rows of Z and labels differ");
  const double n = static_cast<double>(Z.rows());
  Eigen::MatrixXd A = Z.transpose() * Z;
  A.diagonal().array() += n * lambda;
  const Vector b = Z.transpose() * y;

  HindsightSolution sol;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const bool singular = lambda == 0.0 &&
                        (ldlt.info() != Eigen::Success ||
                         ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().cwiseAbs().maxCoeff()));
  if (singular) {
    sol.w = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(Z).solve(y);
    sol.minimum_norm = true;
  } else {
    sol.w = ldlt.solve(b);
  }

  if (std::isfinite(radius) && sol.w.norm() > radius) {
    // Projected gradient on 0.5 w'Aw - b'w with step 1/L, L = largest eigenvalue.
    const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    Vector w = project_ball(sol.w, radius);
    for (int it = 0; it < 1000000; ++it) {
      const Vector grad = A * w - b;
      const Vector next = project_ball(w - grad / L, radius);
      const double stationarity = L * (next - w).norm();
      w = next;
      if (stationarity <= 1e-8) break;
    }
    sol.w = w;
    sol.projected = true;
  }
  sol.loss = cumulative_loss(sol.w, Z, y, lambda);
  return sol;
}

RegretReport regret(double algorithm_loss, std::vector<double> hindsight_losses, std::size_t rounds,
                    std::optional<KernelId> fixed_kernel) {
  if (hindsight_losses.empty()) throw ShapeError("regret needs at least one hindsight loss");
  RegretReport r;
  r.rounds = rounds;
  r.algorithm_loss = algorithm_loss;
  r.hindsight_losses = std::move(hindsight_losses);
  if (fixed_kernel) {
    if (*fixed_kernel >= r.hindsight_losses.size()) throw ShapeError("fixed kernel outside the loss table");
    r.comparator = *fixed_kernel;
    r.fixed_kernel = true;
  } else {
    r.comparator = static_cast<KernelId>(std::min_element(r.hindsight_losses.begin(), r.hindsight_losses.end()) -
                                         r.hindsight_losses.begin());
  }
  r.regret = algorithm_loss - r.hindsight_losses[r.comparator];
  if (rounds > 0) {
    r.regret_over_sqrt_t = r.regret / std::sqrt(static_cast<double>(rounds));
    r.regret_over_t = r.regret / static_cast<double>(rounds);
  }
  for (double h : r.hindsight_losses) r.per_kernel_gaps.push_back(algorithm_loss - h);
  return r;
}

CentralPmfTrace centralized_pmf(const LossHistory& losses, std::span<const double> eta_global, bool clip) {
  if (eta_global.size() != losses.size()) throw ShapeError("centralized_pmf: one rate per round is required");
  CentralPmfTrace out;
  if (losses.empty()) return out;
  const std::size_t P = losses.front().empty() ? 0 : losses.front().front().size();
  std::vector<double> logm(P, 0.0);
  out.pmf.reserve(losses.size());
  for (std::size_t t = 0; t < losses.size(); ++t) {
    for (const auto& node : losses[t]) {
      if (node.size() != P) throw ShapeError("centralized_pmf: ragged kernel dimension");
      for (std::size_t p = 0; p < P; ++p) logm[p] -= eta_global[t] * hedge_loss(node[p], clip);
    }
    out.pmf.push_back(softmax(logm));
  }
  return out;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

std::vector<double> network_pmf(std::span<const KernelId> proposals,
                                const std::vector<std::vector<double>>& node_pmfs) {
  if (proposals.size() != node_pmfs.size() || proposals.empty()) throw ShapeError("network_pmf: one PMF per proposal");
  const std::size_t P = node_pmfs.front().size();
  std::vector<double> counts(P, 0.0);
  for (auto p : proposals) counts.at(p) += 1.0;
  const double K = static_cast<double>(proposals.size());
  // alpha_k = c^{K-1} / sum c^K, computed relative to the largest count.
  const double cmax = *std::max_element(counts.begin(), counts.end());
  double denom = 0.0;
  for (double c : counts)
    if (c > 0) denom += std::pow(c / cmax, K);
  std::vector<double> out(P, 0.0);
  for (std::size_t k = 0; k < proposals.size(); ++k) {
    const double c = counts[proposals[k]];
    const double alpha = std::pow(c / cmax, K - 1.0) / (cmax * denom);
    for (std::size_t p = 0; p < P; ++p) out[p] += alpha * node_pmfs[k][p];
  }
  return out;
}

std::vector<double> selection_fraction(const std::vector<std::vector<KernelId>>& selections, KernelId best) {
  if (selections.empty()) return {};
  const std::size_t T = selections.front().size();
  std::vector<double> out(T, 0.0);
  for (const auto& trial : selections) {
    if (trial.size() != T) throw ShapeError("selection_fraction: trials differ in length");
    for (std::size_t t = 0; t < T; ++t)
      if (trial[t] == best) out[t] += 1.0;
  }
  for (auto& v : out) v /= static_cast<double>(selections.size());
  return out;
}

MartingaleReport martingale_check(const FrozenState& s, std::size_t resamples, Rng& rng) {
  const std::size_t P = s.pmf.size();
  if (P == 0 || s.node_models.size() != P || s.features.size() != P) throw ShapeError("martingale_check: inconsistent frozen state");
  const auto& sampled = s.sampled_models.empty() ? s.node_models : s.sampled_models;
  if (sampled.size() != P) throw ShapeError("martingale_check: sampled model count differs from P");
  if (resamples < 2) throw ConfigError("martingale_check needs at least two resamples");

  double mixture = 0.0;
  std::vector<double> outcome(P);
  for (std::size_t p = 0; p < P; ++p) {
    mixture += s.pmf[p] * loss(s.node_models[p], s.features[p], s.y, s.lambda);
    outcome[p] = loss(sampled[p], s.features[p], s.y, s.lambda);
  }
  MartingaleReport r;
  r.resamples = resamples;
  double second = 0.0, scale = std::abs(mixture);
  for (std::size_t p = 0; p < P; ++p) {
    const double d = outcome[p] - mixture;
    r.expected_mean += s.pmf[p] * d;
    second += s.pmf[p] * d * d;
    scale = std::max(scale, std::abs(outcome[p]));
  }
  r.exact_stddev = std::sqrt(std::max(0.0, second - r.expected_mean * r.expected_mean));

  std::discrete_distribution<std::size_t> pick(s.pmf.begin(), s.pmf.end());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < resamples; ++i) {
    const double x = outcome[pick(rng)] - mixture;
    sum += x;
    sum_sq += x * x;
  }
  const double N = static_cast<double>(resamples);
  r.mean = sum / N;
  r.stddev = std::sqrt(std::max(0.0, (sum_sq - N * r.mean * r.mean) / (N - 1.0)));
  // Sample sigma is zero when the PMF is close to a point mass, so the band
  // uses the exact sigma of X, with a floor for rounding in the mixture.
  r.band = 3.0 * r.exact_stddev / std::sqrt(N) + 1e-12 * (1.0 + scale);
  r.within_band = std::abs(r.mean) <= r.band;
  return r;
}

}  // namespace mkofl
