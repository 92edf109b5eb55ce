#include "mkofl/server.hpp"

#include <cmath>
#include <limits>

#include "mkofl/errors.hpp"

namespace mkofl {

ModelParams fedavg(std::span<const ModelParams> models) {
  if (models.empty()) throw ProtocolError("fedavg needs at least one model");
  const auto n = models.front().size();
  ModelParams sum = ModelParams::Zero(n);
  for (const auto& m : models) {
    if (m.size() != n) throw ProtocolError("fedavg received models of different lengths");
    sum += m;
  }
  return sum / static_cast<double>(models.size());
}

std::vector<double> index_pmf(std::span<const KernelId> proposals, std::size_t num_kernels) {
  if (proposals.empty()) throw ProtocolError("index aggregation needs at least one proposal");
  std::vector<std::size_t> counts(num_kernels, 0);
  for (auto p : proposals) {
    if (p >= num_kernels) throw ProtocolError("proposal outside [1, P]");
    ++counts[p];
  }
  const double power = static_cast<double>(proposals.size());
  std::vector<double> logw(num_kernels, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < num_kernels; ++p) {
    if (counts[p] == 0) continue;
    logw[p] = power * std::log(static_cast<double>(counts[p]));
    top = std::max(top, logw[p]);
  }
  double total = 0.0;
  std::vector<double> pmf(num_kernels, 0.0);
  for (std::size_t p = 0; p < num_kernels; ++p) {
    if (counts[p] == 0) continue;
    pmf[p] = std::exp(logw[p] - top);
    total += pmf[p];
  }
  for (auto& v : pmf) v /= total;
  return pmf;
}

KernelId aggregate_indices(std::span<const KernelId> proposals, std::size_t num_kernels, Rng& rng) {
  const auto pmf = index_pmf(proposals, num_kernels);
  std::discrete_distribution<std::size_t> pick(pmf.begin(), pmf.end());
  return pick(rng);
}

Server::Server(std::size_t num_nodes, std::size_t num_kernels, std::size_t feature_dim, Rng rng)
    : num_nodes_(num_nodes),
      num_kernels_(num_kernels),
      global_model_(ModelParams::Zero(static_cast<Eigen::Index>(feature_dim))),
      rng_(std::move(rng)) {
  if (num_nodes < 1 || num_kernels < 1) throw ConfigError("server needs K >= 1 and P >= 1");
}

DownlinkMessage Server::global_round(std::span<const UplinkMessage> uplinks) {
  if (uplinks.size() != num_nodes_) {
    throw ProtocolError("server expected " + std::to_string(num_nodes_) + " uplinks, got " +
                        std::to_string(uplinks.size()));
  }
  std::vector<ModelParams> models;
  std::vector<KernelId> proposals;
  models.reserve(uplinks.size());
  proposals.reserve(uplinks.size());
  for (const auto& u : uplinks) {
    models.push_back(u.local_model);
    proposals.push_back(u.proposal);
  }
  ModelParams averaged = fedavg(models);
  if (averaged.size() != global_model_.size()) throw ProtocolError("uplink models have the wrong length");
  const KernelId after_next = aggregate_indices(proposals, num_kernels_, rng_);

  global_model_ = std::move(averaged);
  current_index_ = next_index_;
  next_index_ = after_next;
  return downlink();
}

}  // namespace mkofl
