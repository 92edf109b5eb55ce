#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mkofl/edge_node.hpp"

namespace mkofl {

// Coordinate-wise mean. Throws ProtocolError on empty or ragged input.
ModelParams fedavg(std::span<const ModelParams> models);

// Distribution over kernel values induced by node proposals: with c_p the
// number of nodes proposing p and K the number of proposals,
//   Pr[p] = c_p^K / sum_q c_q^K,
// evaluated in the log domain so c^K never overflows.
std::vector<double> index_pmf(std::span<const KernelId> proposals, std::size_t num_kernels);

// Draws the next global kernel index from index_pmf.
KernelId aggregate_indices(std::span<const KernelId> proposals, std::size_t num_kernels, Rng& rng);

/// Global side of the multi-kernel protocol.
///
/// Holds the current global model and the pipelined index pair (p_t, p_{t+1}).
/// Starts from a zero model with both indices at kernel 1.
class Server {
 public:
  Server(std::size_t num_nodes, std::size_t num_kernels, std::size_t feature_dim, Rng rng);

  const ModelParams& global_model() const { return global_model_; }
  KernelId current_index() const { return current_index_; }
  KernelId next_index() const { return next_index_; }

  DownlinkMessage downlink() const { return DownlinkMessage{next_index_, global_model_}; }

  // Averages the uploaded models into the next global model, draws the index
  // for two rounds ahead, shifts the index pipeline and returns the new downlink.
  DownlinkMessage global_round(std::span<const UplinkMessage> uplinks);

 private:
  std::size_t num_nodes_;
  std::size_t num_kernels_;
  ModelParams global_model_;
  KernelId current_index_ = 0;
  KernelId next_index_ = 0;
  Rng rng_;
};

}  // namespace mkofl
