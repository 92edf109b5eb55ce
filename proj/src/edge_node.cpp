#include "mkofl/edge_node.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mkofl/errors.hpp"

namespace mkofl {

double predict(const ModelParams& global_model, const FeatureVector& z) {
  if (global_model.size() != z.size()) throw ShapeError("predict: model/feature size mismatch");
  return global_model.dot(z);
}

double predict(const KernelDictionary& dict, const ModelParams& global_model, KernelId index,
               const Vector& x) {
  if (index >= dict.size()) throw ProtocolError("predict: kernel index outside the dictionary");
  return predict(global_model, dict.features(index, x));
}

std::vector<double> softmax(std::span<const double> log_weights) {
  std::vector<double> out(log_weights.size());
  if (log_weights.empty()) return out;
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(log_weights[i] - top);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

EdgeNode::EdgeNode(std::size_t id, std::size_t num_kernels, std::size_t feature_dim, Rng rng)
    : id_(id),
      models_(num_kernels, ModelParams::Zero(static_cast<Eigen::Index>(feature_dim))),
      log_weights_(num_kernels, 0.0),
      last_losses_(num_kernels, 0.0),
      rng_(std::move(rng)) {
  if (num_kernels < 1) throw ConfigError("edge node needs at least one kernel");
}

void EdgeNode::apply_downlink(const DownlinkMessage& msg, KernelId current_index) {
  if (current_index >= models_.size() || msg.next_index >= models_.size()) {
    throw ProtocolError("downlink references a kernel index outside [1, P]");
  }
  if (msg.global_model.size() != models_[current_index].size()) {
    throw ProtocolError("downlink model has the wrong length");
  }
  models_[current_index] = msg.global_model;
}

std::span<const double> EdgeNode::local_update(std::span<const FeatureVector> features, double y,
                                               double step, const LossConfig& cfg) {
  if (features.size() != models_.size()) throw ShapeError("local_update needs one feature vector per kernel");
  for (std::size_t p = 0; p < models_.size(); ++p) {
    last_losses_[p] = loss(models_[p], features[p], y, cfg.lambda);
    ogd_step_inplace(models_[p], features[p], y, step, cfg);
  }
  losses_fresh_ = true;
  return last_losses_;
}

void EdgeNode::update_hedge(double eta_global, std::size_t num_nodes, bool clip) {
  if (!losses_fresh_) throw ProtocolError("update_hedge called before local_update");
  const double rate = eta_global * static_cast<double>(num_nodes);
  for (std::size_t p = 0; p < log_weights_.size(); ++p) {
    log_weights_[p] -= rate * hedge_loss(last_losses_[p], clip);
  }
  losses_fresh_ = false;
}

std::vector<double> EdgeNode::pmf() const { return softmax(log_weights_); }

KernelId EdgeNode::propose_kernel() {
  const auto q = pmf();
  std::discrete_distribution<std::size_t> pick(q.begin(), q.end());
  pending_proposal_ = pick(rng_);
  return pending_proposal_;
}

UplinkMessage EdgeNode::build_uplink(KernelId next_index) const {
  if (next_index >= models_.size()) throw ProtocolError("uplink index outside [1, P]");
  return UplinkMessage{pending_proposal_, models_[next_index]};
}

void EdgeNode::set_model(KernelId p, ModelParams w) {
  if (w.size() != models_.at(p).size()) throw ShapeError("set_model: wrong length");
  models_[p] = std::move(w);
}

void EdgeNode::set_log_weights(std::vector<double> log_weights) {
  if (log_weights.size() != log_weights_.size()) throw ShapeError("set_log_weights: wrong length");
  log_weights_ = std::move(log_weights);
}

}  // namespace mkofl
