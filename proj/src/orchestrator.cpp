#include "mkofl/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "mkofl/errors.hpp"
#include "mkofl/evaluation.hpp"

namespace mkofl {

StepSizes step_sizes(const ExperimentConfig& cfg, std::size_t t, std::size_t horizon) {
  const double clock = cfg.schedule == StepSchedule::kAnytime ? static_cast<double>(t)
                                                              : static_cast<double>(horizon);
  const double root = std::sqrt(std::max(clock, 1.0));
  return {cfg.eta_local / root, cfg.eta_global_numerator() / root};
}

namespace {

KernelId argmax(std::span<const double> v) {
  return static_cast<KernelId>(std::max_element(v.begin(), v.end()) - v.begin());
}

TraceRecord start_record(std::size_t t, std::span<const Sample> samples) {
  TraceRecord rec;
  rec.round = t;
  rec.sample_ids.reserve(samples.size());
  rec.labels.reserve(samples.size());
  rec.predictions.reserve(samples.size());
  for (const auto& s : samples) {
    rec.sample_ids.push_back(s.id);
    rec.labels.push_back(s.y);
  }
  return rec;
}

void finish_errors(TraceRecord& rec) {
  rec.round_sq_error = 0.0;
  for (std::size_t k = 0; k < rec.labels.size(); ++k) {
    const double e = rec.predictions[k] - rec.labels[k];
    rec.round_sq_error += e * e;
  }
}

double mixture_norm_sq(const std::vector<ModelParams>& models, std::span<const double> pmf) {
  double s = 0.0;
  for (std::size_t p = 0; p < models.size(); ++p) s += pmf[p] * models[p].squaredNorm();
  return s;
}

}  // namespace

// ---------------------------------------------------------------- SK-OFL

SkOflProtocol::SkOflProtocol(const ExperimentConfig& cfg, const KernelDictionary& dict,
                             std::size_t horizon)
    : cfg_(cfg),
      dict_(dict),
      horizon_(horizon),
      kernel_(cfg.sk_kernel - 1),
      global_(ModelParams::Zero(static_cast<Eigen::Index>(dict.feature_dim()))) {
  if (kernel_ >= dict.size()) throw ConfigError("sk_kernel outside the dictionary");
}

TraceRecord SkOflProtocol::run_round(std::size_t t, std::span<const Sample> samples) {
  if (samples.size() != cfg_.num_nodes) throw ProtocolError("sk_ofl round needs one sample per node");
  TraceRecord rec = start_record(t, samples);
  rec.steps = step_sizes(cfg_, t, horizon_);
  rec.selected = rec.next_index = kernel_;
  rec.model_norm_sq = global_.squaredNorm();

  std::vector<ModelParams> uploads;
  uploads.reserve(samples.size());
  for (const auto& s : samples) {
    const FeatureVector z = dict_.features(kernel_, s.x);
    rec.predictions.push_back(predict(global_, z));
    if (cfg_.verbose_trace) {
      rec.detail.push_back({kernel_, {loss(global_, z, s.y, cfg_.loss.lambda)}, {}});
    }
    uploads.push_back(ogd_step(global_, z, s.y, rec.steps.local, cfg_.loss));
  }
  global_ = fedavg(uploads);
  rec.uplink_scalars = samples.size() * cfg_.uplink_scalars_per_node();
  rec.downlink_scalars = samples.size() * cfg_.downlink_scalars_per_node();
  finish_errors(rec);
  return rec;
}

// ---------------------------------------------------------------- MK-OFL

MkOflProtocol::MkOflProtocol(const ExperimentConfig& cfg, const KernelDictionary& dict,
                             std::uint64_t trial_seed, std::size_t horizon)
    : cfg_(cfg),
      dict_(dict),
      horizon_(horizon),
      server_(cfg.num_nodes, dict.size(), dict.feature_dim(), make_rng(trial_seed, Stream::kServer)) {
  nodes_.reserve(cfg.num_nodes);
  for (std::size_t k = 0; k < cfg.num_nodes; ++k) {
    nodes_.emplace_back(k, dict.size(), dict.feature_dim(), make_rng(trial_seed, Stream::kNode, k));
  }
}

TraceRecord MkOflProtocol::run_round(std::size_t t, std::span<const Sample> samples) {
  if (samples.size() != nodes_.size()) throw ProtocolError("mk_ofl round needs one sample per node");
  if (server_.current_index() != current_) throw ProtocolError("index pipeline out of sync");

  TraceRecord rec = start_record(t, samples);
  rec.steps = step_sizes(cfg_, t, horizon_);
  const DownlinkMessage down = server_.downlink();  // (p_{t+1}, w_t)
  rec.selected = current_;
  rec.next_index = down.next_index;
  rec.model_norm_sq = down.global_model.squaredNorm();

  std::vector<UplinkMessage> uplinks;
  uplinks.reserve(nodes_.size());
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    auto& node = nodes_[k];
    const Sample& s = samples[k];
    node.apply_downlink(down, current_);
    const auto features = dict_.all_features(s.x);
    rec.predictions.push_back(predict(down.global_model, features[current_]));
    node.local_update(features, s.y, rec.steps.local, cfg_.loss);
    node.update_hedge(rec.steps.global, nodes_.size(), cfg_.loss.clip_for_hedge);
    const KernelId proposal = node.propose_kernel();
    uplinks.push_back(node.build_uplink(down.next_index));
    if (cfg_.verbose_trace) {
      const auto losses = node.last_losses();
      rec.detail.push_back({proposal, {losses.begin(), losses.end()}, node.pmf()});
    }
  }
  for (const auto& u : uplinks) rec.uplink_scalars += u.scalar_count();
  rec.downlink_scalars = nodes_.size() * down.scalar_count();

  server_.global_round(uplinks);
  current_ = down.next_index;
  finish_errors(rec);
  return rec;
}

// ---------------------------------------------------------------- naive extension

NaiveMkProtocol::NaiveMkProtocol(const ExperimentConfig& cfg, const KernelDictionary& dict,
                                 std::size_t horizon)
    : cfg_(cfg),
      dict_(dict),
      horizon_(horizon),
      models_(dict.size(), ModelParams::Zero(static_cast<Eigen::Index>(dict.feature_dim()))),
      log_weights_(dict.size(), 0.0) {}

std::vector<double> NaiveMkProtocol::pmf() const { return softmax(log_weights_); }

TraceRecord NaiveMkProtocol::run_round(std::size_t t, std::span<const Sample> samples) {
  if (samples.size() != cfg_.num_nodes) throw ProtocolError("naive_mk round needs one sample per node");
  TraceRecord rec = start_record(t, samples);
  rec.steps = step_sizes(cfg_, t, horizon_);
  const auto q = pmf();
  rec.selected = rec.next_index = argmax(q);
  rec.model_norm_sq = mixture_norm_sq(models_, q);

  const std::size_t P = models_.size();
  const double K = static_cast<double>(samples.size());
  std::vector<ModelParams> model_sums(P, ModelParams::Zero(models_.front().size()));
  std::vector<double> weight_sums(P, 0.0);
  for (const auto& s : samples) {
    const auto features = dict_.all_features(s.x);
    double y_hat = 0.0;
    std::vector<double> losses(P);
    std::vector<double> local_weights(log_weights_);
    for (std::size_t p = 0; p < P; ++p) {
      y_hat += q[p] * models_[p].dot(features[p]);
      losses[p] = loss(models_[p], features[p], s.y, cfg_.loss.lambda);
      model_sums[p] += ogd_step(models_[p], features[p], s.y, rec.steps.local, cfg_.loss);
      local_weights[p] -= rec.steps.global * K * hedge_loss(losses[p], cfg_.loss.clip_for_hedge);
      weight_sums[p] += local_weights[p];
    }
    rec.predictions.push_back(y_hat);
    if (cfg_.verbose_trace) rec.detail.push_back({rec.selected, std::move(losses), softmax(local_weights)});
  }
  for (std::size_t p = 0; p < P; ++p) {
    models_[p] = model_sums[p] / K;
    log_weights_[p] = weight_sums[p] / K;
  }
  rec.uplink_scalars = samples.size() * cfg_.uplink_scalars_per_node();
  rec.downlink_scalars = samples.size() * cfg_.downlink_scalars_per_node();
  finish_errors(rec);
  return rec;
}

// ---------------------------------------------------------------- centralized OMKL

CentralOmklProtocol::CentralOmklProtocol(const ExperimentConfig& cfg, const KernelDictionary& dict,
                                         std::size_t horizon)
    : cfg_(cfg),
      dict_(dict),
      horizon_(horizon),
      models_(dict.size(), ModelParams::Zero(static_cast<Eigen::Index>(dict.feature_dim()))),
      log_weights_(dict.size(), 0.0) {}

TraceRecord CentralOmklProtocol::run_round(std::size_t t, std::span<const Sample> samples) {
  TraceRecord rec = start_record(t, samples);
  const std::size_t K = samples.size();
  const auto q0 = softmax(log_weights_);
  rec.selected = rec.next_index = argmax(q0);
  rec.model_norm_sq = 0.0;
  rec.steps = step_sizes(cfg_, (t - 1) * K + 1, horizon_ * K);

  const std::size_t P = models_.size();
  for (std::size_t k = 0; k < K; ++k) {
    const Sample& s = samples[k];
    const StepSizes steps = step_sizes(cfg_, (t - 1) * K + k + 1, horizon_ * K);
    const auto q = softmax(log_weights_);
    rec.model_norm_sq += mixture_norm_sq(models_, q) / static_cast<double>(K);
    const auto features = dict_.all_features(s.x);
    double y_hat = 0.0;
    std::vector<double> losses(P);
    for (std::size_t p = 0; p < P; ++p) {
      y_hat += q[p] * models_[p].dot(features[p]);
      losses[p] = loss(models_[p], features[p], s.y, cfg_.loss.lambda);
      ogd_step_inplace(models_[p], features[p], s.y, steps.local, cfg_.loss);
      log_weights_[p] -= steps.global * hedge_loss(losses[p], cfg_.loss.clip_for_hedge);
    }
    rec.predictions.push_back(y_hat);
    if (cfg_.verbose_trace) rec.detail.push_back({argmax(q), std::move(losses), softmax(log_weights_)});
  }
  finish_errors(rec);
  return rec;
}

std::unique_ptr<Protocol> make_protocol(const ExperimentConfig& cfg, const KernelDictionary& dict,
                                        std::uint64_t seed, std::size_t horizon) {
  switch (cfg.algorithm) {
    case Algorithm::kSkOfl: return std::make_unique<SkOflProtocol>(cfg, dict, horizon);
    case Algorithm::kMkOfl: return std::make_unique<MkOflProtocol>(cfg, dict, seed, horizon);
    case Algorithm::kNaiveMk: return std::make_unique<NaiveMkProtocol>(cfg, dict, horizon);
    case Algorithm::kCentralOmkl: return std::make_unique<CentralOmklProtocol>(cfg, dict, horizon);
  }
  throw ConfigError("unhandled algorithm");
}

// ---------------------------------------------------------------- trials

std::vector<KernelId> TrialTrace::selected() const {
  std::vector<KernelId> out;
  out.reserve(rounds.size());
  for (const auto& r : rounds) out.push_back(r.selected);
  return out;
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial) {
  return derive_seed(cfg.seed, Stream::kTrial, trial);
}

KernelDictionary trial_dictionary(const ExperimentConfig& cfg, std::size_t trial, std::size_t input_dim) {
  return KernelDictionary::build(cfg.num_kernels, cfg.resolved_features(), input_dim, trial_seed(cfg, trial));
}

TrialTrace run_trial(const ExperimentConfig& cfg, const NodeStreams& streams, std::size_t trial) {
  if (streams.num_nodes != cfg.num_nodes) throw ConfigError("streams were built for a different K");
  if (streams.samples.empty()) throw ConfigError("no samples to stream");
  const std::size_t dim = static_cast<std::size_t>(streams.samples.front().x.size());
  const KernelDictionary dict = trial_dictionary(cfg, trial, dim);
  const std::uint64_t seed = trial_seed(cfg, trial);
  const std::size_t T = streams.num_rounds;
  auto protocol = make_protocol(cfg, dict, seed, T);

  TrialTrace trace;
  trace.trial = trial;
  trace.seed = seed;
  trace.rounds.reserve(T);
  double sq_sum = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    TraceRecord rec = protocol->run_round(t, streams.round(t - 1));
    if (t > cfg.burn_in) {
      sq_sum += rec.round_sq_error;
      rec.mse = sq_sum / static_cast<double>((t - cfg.burn_in) * cfg.num_nodes);
    } else {
      rec.mse = std::nan("");
    }
    trace.rounds.push_back(std::move(rec));
  }
  return trace;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData out;
  const std::size_t wanted = cfg.num_rounds * cfg.num_nodes;
  out.dataset = materialize_dataset(cfg.dataset, wanted, cfg.data_seed);
  std::size_t T = cfg.num_rounds;
  const std::size_t feasible = out.dataset.size() / cfg.num_nodes;
  if (feasible == 0) {
    throw ConfigError("dataset has " + std::to_string(out.dataset.size()) + " rows, fewer than K = " +
                      std::to_string(cfg.num_nodes));
  }
  if (T == 0) {
    T = feasible;
  } else if (T > feasible) {
    out.truncation_notice = "data stream exhausted: requested T = " + std::to_string(T) +
                            " but only " + std::to_string(feasible) + " rounds are available for K = " +
                            std::to_string(cfg.num_nodes) + "; the run stops at T = " +
                            std::to_string(feasible);
    T = feasible;
  }
  if (cfg.burn_in >= T) throw ConfigError("burn_in leaves no rounds to score");
  out.streams = partition(out.dataset, cfg.num_nodes, T, cfg.data_seed, cfg.dataset.shuffled());
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, prepare_data(cfg)); }

ExperimentResult run_experiment(const ExperimentConfig& cfg, PreparedData data) {
  cfg.validate();
  ExperimentResult result;
  result.config = cfg;
  result.dataset = std::move(data.dataset);
  result.streams = std::move(data.streams);
  result.truncation_notice = std::move(data.truncation_notice);
  result.trials.resize(cfg.trials);

  std::size_t workers = cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.trials);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < cfg.trials; i = next++) {
      try {
        result.trials[i] = run_trial(cfg, result.streams, i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  const std::size_t T = result.streams.num_rounds;
  result.mean_mse.assign(T, 0.0);
  for (const auto& tr : result.trials)
    for (std::size_t t = 0; t < T; ++t) result.mean_mse[t] += tr.rounds[t].mse / static_cast<double>(cfg.trials);

  if (cfg.best_kernel) {
    result.best_kernel = *cfg.best_kernel - 1;
  } else if (cfg.dataset.kind == DatasetKind::kSynthetic) {
    for (std::size_t p = 1; p <= cfg.num_kernels; ++p) {
      const double b = dictionary_bandwidth_sq(p);
      if (std::abs(b - cfg.dataset.bandwidth_sq) <= 1e-9 * b) result.best_kernel = p - 1;
    }
  }
  if (result.best_kernel) {
    std::vector<std::vector<KernelId>> selections;
    for (const auto& tr : result.trials) selections.push_back(tr.selected());
    result.best_fraction = selection_fraction(selections, *result.best_kernel);
  }
  return result;
}

}  // namespace mkofl
