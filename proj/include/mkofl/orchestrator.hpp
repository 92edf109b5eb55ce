#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mkofl/config.hpp"
#include "mkofl/edge_node.hpp"
#include "mkofl/server.hpp"

namespace mkofl {

struct StepSizes {
  double local = 0.0;
  double global = 0.0;
};

// Anytime: eta_local / sqrt(t) and eta_global / sqrt(t). Fixed: same with the
// horizon T in place of t. t is one-based.
StepSizes step_sizes(const ExperimentConfig& cfg, std::size_t t, std::size_t horizon);

// Per-node, per-round detail kept when verbose tracing is on.
struct NodeDetail {
  KernelId proposal = 0;        // proposal sent this round (mk_ofl)
  std::vector<double> losses;   // per-kernel loss measured before the OGD step
  std::vector<double> pmf;      // kernel PMF after this round's Hedge update
};

struct TraceRecord {
  std::size_t round = 0;     // one-based
  KernelId selected = 0;     // kernel used for prediction this round
  KernelId next_index = 0;   // kernel broadcast alongside this round's global model
  std::vector<std::size_t> sample_ids;
  std::vector<double> labels;
  std::vector<double> predictions;
  double round_sq_error = 0.0;  // sum over nodes of (prediction - label)^2
  double mse = 0.0;             // cumulative, filled by the trial runner
  double model_norm_sq = 0.0;   // ||w_t||^2 of the predicting model
  std::size_t uplink_scalars = 0;    // summed over nodes
  std::size_t downlink_scalars = 0;  // summed over nodes
  StepSizes steps;
  std::vector<NodeDetail> detail;
};

class Protocol {
 public:
  virtual ~Protocol() = default;
  // t is one-based; samples holds one sample per node.
  virtual TraceRecord run_round(std::size_t t, std::span<const Sample> samples) = 0;
};

/// Single fixed kernel, FedAvg of one OGD step per node.
class SkOflProtocol : public Protocol {
 public:
  SkOflProtocol(const ExperimentConfig& cfg, const KernelDictionary& dict, std::size_t horizon);
  TraceRecord run_round(std::size_t t, std::span<const Sample> samples) override;
  const ModelParams& global_model() const { return global_; }

 private:
  const ExperimentConfig& cfg_;
  const KernelDictionary& dict_;
  std::size_t horizon_;
  KernelId kernel_;
  ModelParams global_;
};

/// Multi-kernel protocol: one model plus one kernel index per message.
class MkOflProtocol : public Protocol {
 public:
  MkOflProtocol(const ExperimentConfig& cfg, const KernelDictionary& dict, std::uint64_t trial_seed,
                std::size_t horizon);
  TraceRecord run_round(std::size_t t, std::span<const Sample> samples) override;

  const std::vector<EdgeNode>& nodes() const { return nodes_; }
  const Server& server() const { return server_; }
  // Index p_t the nodes will predict with in the next round.
  KernelId known_current_index() const { return current_; }

 private:
  const ExperimentConfig& cfg_;
  const KernelDictionary& dict_;
  std::size_t horizon_;
  std::vector<EdgeNode> nodes_;
  Server server_;
  KernelId current_ = 0;
};

/// Full exchange of all P models and Hedge log weights; predictions mix the
/// kernels with the global PMF. Log weights are averaged across nodes, which
/// reproduces the network-wide Hedge recursion.
class NaiveMkProtocol : public Protocol {
 public:
  NaiveMkProtocol(const ExperimentConfig& cfg, const KernelDictionary& dict, std::size_t horizon);
  TraceRecord run_round(std::size_t t, std::span<const Sample> samples) override;

  const std::vector<ModelParams>& global_models() const { return models_; }
  std::vector<double> pmf() const;

 private:
  const ExperimentConfig& cfg_;
  const KernelDictionary& dict_;
  std::size_t horizon_;
  std::vector<ModelParams> models_;
  std::vector<double> log_weights_;
};

/// Centralized OMKL: one learner that sees the K samples of a round one after
/// another (the concatenated stream). No communication.
class CentralOmklProtocol : public Protocol {
 public:
  CentralOmklProtocol(const ExperimentConfig& cfg, const KernelDictionary& dict, std::size_t horizon);
  TraceRecord run_round(std::size_t t, std::span<const Sample> samples) override;

 private:
  const ExperimentConfig& cfg_;
  const KernelDictionary& dict_;
  std::size_t horizon_;
  std::vector<ModelParams> models_;
  std::vector<double> log_weights_;
};

std::unique_ptr<Protocol> make_protocol(const ExperimentConfig& cfg, const KernelDictionary& dict,
                                        std::uint64_t trial_seed, std::size_t horizon);

struct TrialTrace {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> rounds;

  double terminal_mse() const { return rounds.empty() ? 0.0 : rounds.back().mse; }
  std::vector<KernelId> selected() const;
};

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial);
KernelDictionary trial_dictionary(const ExperimentConfig& cfg, std::size_t trial, std::size_t input_dim);

TrialTrace run_trial(const ExperimentConfig& cfg, const NodeStreams& streams, std::size_t trial);

struct ExperimentResult {
  ExperimentConfig config;
  Dataset dataset;
  NodeStreams streams;
  std::vector<TrialTrace> trials;
  std::vector<double> mean_mse;      // per round, averaged over trials
  std::optional<std::string> truncation_notice;
  std::optional<KernelId> best_kernel;  // ground truth or configured
  std::vector<double> best_fraction;    // per round, when best_kernel is known

  double terminal_mse() const { return mean_mse.empty() ? 0.0 : mean_mse.back(); }
};

// Rows needed and streams built from the config's dataset.
struct PreparedData {
  Dataset dataset;
  NodeStreams streams;
  std::optional<std::string> truncation_notice;
};
PreparedData prepare_data(const ExperimentConfig& cfg);

ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg, PreparedData data);

}  // namespace mkofl
