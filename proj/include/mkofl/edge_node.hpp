#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mkofl/kernel_features.hpp"
#include "mkofl/objective.hpp"
#include "mkofl/rng.hpp"

namespace mkofl {

// Server -> node at round t: the index to pair with the next global model and
// the current global model.
struct DownlinkMessage {
  KernelId next_index = 0;
  ModelParams global_model;

  std::size_t scalar_count() const { return static_cast<std::size_t>(global_model.size()) + 1; }
};

// Node -> server at round t: the node's kernel proposal for round t+2 and its
// updated model for the kernel the server pairs with the next global model.
struct UplinkMessage {
  KernelId proposal = 0;
  ModelParams local_model;

  std::size_t scalar_count() const { return static_cast<std::size_t>(local_model.size()) + 1; }
};

// Label estimate w' z for an already computed feature vector.
double predict(const ModelParams& global_model, const FeatureVector& z);
double predict(const KernelDictionary& dict, const ModelParams& global_model, KernelId index,
               const Vector& x);

// Normalized PMF from log weights, with max subtraction.
std::vector<double> softmax(std::span<const double> log_weights);

/// One edge node of the multi-kernel protocol.
///
/// Holds one model per dictionary kernel and the Hedge weights over kernels in
/// the log domain. A round is driven in this order:
///   apply_downlink -> local_update -> update_hedge -> propose_kernel -> build_uplink.
/// Between apply_downlink and local_update, models() holds the per-kernel
/// parameters the losses are measured at.
class EdgeNode {
 public:
  EdgeNode(std::size_t id, std::size_t num_kernels, std::size_t feature_dim, Rng rng);

  std::size_t id() const { return id_; }
  std::size_t num_kernels() const { return models_.size(); }

  // The global model overwrites the kernel it was trained for (current_index);
  // every other kernel keeps its local parameters.
  void apply_downlink(const DownlinkMessage& msg, KernelId current_index);

  // Records the loss of each kernel's model on (z_p, y), then takes one OGD step
  // per kernel. Returns the recorded losses.
  std::span<const double> local_update(std::span<const FeatureVector> features, double y,
                                       double step, const LossConfig& cfg);

  // log m(p) -= eta_global * K * loss_p, clipped to [0,1] when requested.
  void update_hedge(double eta_global, std::size_t num_nodes, bool clip);

  KernelId propose_kernel();
  UplinkMessage build_uplink(KernelId next_index) const;

  std::vector<double> pmf() const;
  std::span<const double> log_weights() const { return log_weights_; }
  std::span<const double> last_losses() const { return last_losses_; }
  const std::vector<ModelParams>& models() const { return models_; }
  KernelId pending_proposal() const { return pending_proposal_; }

  // Direct state access for replay and frozen-state diagnostics.
  void set_model(KernelId p, ModelParams w);
  void set_log_weights(std::vector<double> log_weights);

 private:
  std::size_t id_;
  std::vector<ModelParams> models_;
  std::vector<double> log_weights_;
  std::vector<double> last_losses_;
  KernelId pending_proposal_ = 0;
  bool losses_fresh_ = false;
  Rng rng_;
};

}  // namespace mkofl
