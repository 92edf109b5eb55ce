#include "mkofl/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mkofl/errors.hpp"
#include "mkofl/orchestrator.hpp"
#include "mkofl/trace_io.hpp"

namespace mkofl {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IngestionError& e) {
    err << "ingestion error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

double mean_of_tail(const std::vector<double>& v, std::size_t n) {
  if (v.empty()) return std::nan("");
  n = std::min(n, v.size());
  return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(n), v.end(), 0.0) / static_cast<double>(n);
}

nlohmann::json summarize(const ExperimentResult& r) {
  const auto& cfg = r.config;
  std::vector<double> terminal;
  std::vector<std::size_t> uplink_totals, downlink_totals;
  for (const auto& tr : r.trials) {
    terminal.push_back(tr.terminal_mse());
    std::size_t up = 0, down = 0;
    for (const auto& rec : tr.rounds) {
      up += rec.uplink_scalars;
      down += rec.downlink_scalars;
    }
    uplink_totals.push_back(up);
    downlink_totals.push_back(down);
  }
  const double mean = std::accumulate(terminal.begin(), terminal.end(), 0.0) / static_cast<double>(terminal.size());
  double var = 0.0;
  for (double v : terminal) var += (v - mean) * (v - mean);
  const double sd = terminal.size() > 1 ? std::sqrt(var / static_cast<double>(terminal.size() - 1)) : 0.0;

  std::vector<double> final_selection(cfg.num_kernels, 0.0);
  for (const auto& tr : r.trials) final_selection[tr.rounds.back().selected] += 1.0 / static_cast<double>(r.trials.size());

  nlohmann::json j = {
      {"schema_version", kTraceSchemaVersion},
      {"algorithm", to_string(cfg.algorithm)},
      {"trials", cfg.trials},
      {"rounds", r.streams.num_rounds},
      {"nodes", cfg.num_nodes},
      {"kernels", cfg.num_kernels},
      {"features", cfg.resolved_features()},
      {"terminal_mse", {{"mean", mean}, {"sd", sd}, {"per_trial", terminal}}},
      {"communication",
       {{"uplink_scalars_per_node_round", cfg.uplink_scalars_per_node()},
        {"downlink_scalars_per_node_round", cfg.downlink_scalars_per_node()},
        {"budget", cfg.budget},
        {"total_uplink_scalars_per_trial", uplink_totals.front()},
        {"total_downlink_scalars_per_trial", downlink_totals.front()}}},
      {"final_selection_fraction", final_selection},
      {"truncation_notice", r.truncation_notice ? nlohmann::json(*r.truncation_notice) : nlohmann::json(nullptr)},
  };
  if (r.best_kernel) {
    j["best_kernel"] = *r.best_kernel + 1;
    j["best_fraction_final"] = r.best_fraction.back();
    j["best_fraction_last50_mean"] = mean_of_tail(r.best_fraction, 50);
  } else {
    j["best_kernel"] = nullptr;
  }
  return j;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

ExperimentConfig config_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = path.empty() ? to_json(ExperimentConfig{}) : read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace

ExperimentConfig resolve_config(const RunOptions& opts) {
  nlohmann::json j = opts.config_path.empty() ? to_json(ExperimentConfig{}) : read_json_file(opts.config_path);
  for (const auto& o : opts.overrides) apply_override(j, o);
  if (opts.trials) j["trials"] = *opts.trials;
  if (opts.seed) j["seed"] = *opts.seed;
  if (opts.algorithm) j["algorithm"] = *opts.algorithm;
  if (opts.dataset_path) {
    if (!j.contains("dataset") || j["dataset"].value("kind", "synthetic") == "synthetic") {
      j["dataset"] = {{"kind", "csv"}};
    }
    j["dataset"]["path"] = *opts.dataset_path;
  }
  if (opts.verbose_trace) j["verbose_trace"] = true;
  return config_from_json(j);
}

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto started = std::chrono::steady_clock::now();
    const std::string started_at = timestamp_utc();
    const ExperimentConfig cfg = resolve_config(opts);
    const ExperimentResult result = run_experiment(cfg);
    if (result.truncation_notice) err << "notice: " << *result.truncation_notice << '\n';

    fs::create_directories(opts.out_dir);
    auto files = write_run_csvs(result, opts.out_dir);

    write_json_file(summarize(result), fs::path(opts.out_dir) / "summary.json");
    files.push_back("summary.json");
    trial_dictionary(cfg, 0, result.dataset.dim()).save((fs::path(opts.out_dir) / "dictionary.json").string());
    files.push_back("dictionary.json");
    write_normalization_sidecar(result.dataset, (fs::path(opts.out_dir) / "dataset.json").string());
    files.push_back("dataset.json");

    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < cfg.trials; ++i) seeds.push_back(trial_seed(cfg, i));
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    nlohmann::json manifest = {
        {"tool", "mkofl"},
        {"version", MKOFL_VERSION},
        {"schema_version", kTraceSchemaVersion},
        {"command", opts.command_line},
        {"config", to_json(cfg)},
        {"seeds", {{"seed", cfg.seed}, {"data_seed", cfg.data_seed}, {"trial_seeds", seeds}}},
        {"outputs", files},
        {"started_at", started_at},
        {"wall_clock_seconds", seconds},
    };
    write_json_file(manifest, fs::path(opts.out_dir) / "manifest.json");

    out << to_string(cfg.algorithm) << ": T=" << result.streams.num_rounds << " K=" << cfg.num_nodes
        << " trials=" << cfg.trials << " terminal MSE=" << std::setprecision(6) << result.terminal_mse();
    if (result.best_kernel) out << " best-kernel fraction(T)=" << result.best_fraction.back();
    out << "\nwrote " << opts.out_dir << '\n';
    return kExitOk;
  });
}

namespace {

struct NamedRun {
  std::string label;
  ExperimentConfig cfg;
};

std::string run_label(const ExperimentConfig& cfg) {
  if (cfg.algorithm == Algorithm::kSkOfl) return "sk_ofl_p" + std::to_string(cfg.sk_kernel);
  return to_string(cfg.algorithm);
}

}  // namespace

int cmd_compare(const CompareOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.config_paths.empty()) throw ConfigError("compare needs at least one --config");
    std::vector<NamedRun> runs;
    auto add = [&](ExperimentConfig cfg) {
      if (opts.trials) cfg.trials = *opts.trials;
      if (opts.seed) cfg.seed = *opts.seed;
      cfg.validate();
      std::string label = run_label(cfg);
      std::size_t dup = 1;
      for (const auto& r : runs)
        if (r.label == label || r.label.rfind(label + "_", 0) == 0) ++dup;
      if (dup > 1) label += "_" + std::to_string(dup);
      runs.push_back({label, cfg});
    };
    for (const auto& path : opts.config_paths) add(config_with_overrides(path, opts.overrides));
    const ExperimentConfig base = runs.front().cfg;
    if (opts.sk_sweep) {
      for (std::size_t p = 1; p <= base.num_kernels; ++p) {
        ExperimentConfig c = base;
        c.algorithm = Algorithm::kSkOfl;
        c.sk_kernel = p;
        c.num_features = 0;
        add(c);
      }
    }
    if (opts.with_naive) {
      ExperimentConfig c = base;
      c.algorithm = Algorithm::kNaiveMk;
      add(c);
    }

    const nlohmann::json base_data = to_json(base)["dataset"];
    for (const auto& r : runs) {
      if (r.cfg.data_seed != base.data_seed) {
        throw ConfigError("cannot compare runs with different data seeds: '" + runs.front().label +
                          "' uses data_seed=" + std::to_string(base.data_seed) + " but '" + r.label +
                          "' uses data_seed=" + std::to_string(r.cfg.data_seed));
      }
      if (to_json(r.cfg)["dataset"] != base_data) {
        throw ConfigError("cannot compare runs on different datasets: '" + r.label + "' differs from '" +
                          runs.front().label + "'");
      }
      if (r.cfg.num_nodes != base.num_nodes || r.cfg.num_rounds != base.num_rounds) {
        throw ConfigError("cannot compare runs with different K or T: '" + r.label + "'");
      }
    }

    const PreparedData data = prepare_data(base);
    if (data.truncation_notice) err << "notice: " << *data.truncation_notice << '\n';
    std::vector<ExperimentResult> results;
    for (const auto& r : runs) {
      results.push_back(run_experiment(r.cfg, data));
      out << r.label << ": terminal MSE " << std::setprecision(6) << results.back().terminal_mse() << '\n';
    }

    fs::create_directories(opts.out_dir);
    const std::size_t T = data.streams.num_rounds;
    {
      std::ofstream f(fs::path(opts.out_dir) / "compare_mse.csv");
      if (!f) throw IngestionError("cannot write compare_mse.csv");
      f.precision(17);
      f << "round";
      for (const auto& r : runs) f << ',' << r.label;
      f << '\n';
      for (std::size_t t = 0; t < T; ++t) {
        f << t + 1;
        for (const auto& res : results) f << ',' << res.mean_mse[t];
        f << '\n';
      }
    }
    {
      std::ofstream f(fs::path(opts.out_dir) / "compare_comm.csv");
      if (!f) throw IngestionError("cannot write compare_comm.csv");
      f << "round";
      for (const auto& r : runs) f << ',' << r.label << "_uplink";
      f << '\n';
      for (std::size_t t = 0; t < T; ++t) {
        f << t + 1;
        for (const auto& res : results) f << ',' << res.trials.front().rounds[t].uplink_scalars;
        f << '\n';
      }
    }
    nlohmann::json summary = nlohmann::json::object();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      summary[runs[i].label] = {{"config", to_json(runs[i].cfg)},
                                {"terminal_mse", results[i].terminal_mse()},
                                {"uplink_scalars_per_node_round", runs[i].cfg.uplink_scalars_per_node()}};
    }
    write_json_file(summary, fs::path(opts.out_dir) / "compare_summary.json");
    out << "wrote " << opts.out_dir << '\n';
    return kExitOk;
  });
}

namespace {

std::vector<double> geometric_mix(const std::vector<NodeDetail>& detail) {
  const std::size_t P = detail.front().pmf.size();
  std::vector<double> logw(P, 0.0);
  for (const auto& d : detail)
    for (std::size_t p = 0; p < P; ++p) logw[p] += std::log(d.pmf[p]) / static_cast<double>(detail.size());
  return softmax(logw);
}

}  // namespace

int cmd_oracle(const OracleOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.trace_dir.empty()) throw ConfigError("oracle needs a trace directory");
    ExperimentConfig cfg;
    if (!opts.config_path.empty()) {
      cfg = load_config(opts.config_path);
    } else {
      const auto manifest = read_json_file((fs::path(opts.trace_dir) / "manifest.json").string());
      cfg = config_from_json(manifest.at("config"));
    }
    if (opts.trial < 1 || opts.trial > cfg.trials) throw ConfigError("trial outside [1, trials]");
    const std::size_t trial = opts.trial - 1;
    const TrialTrace trace = read_trial_trace(opts.trace_dir, trial, true);

    const PreparedData data = prepare_data(cfg);
    const std::size_t T = data.streams.num_rounds;
    const std::size_t K = cfg.num_nodes;
    if (trace.rounds.size() != T) throw IngestionError("trace has " + std::to_string(trace.rounds.size()) +
                                                       " rounds but the config yields " + std::to_string(T));
    for (std::size_t t = 0; t < T; ++t) {
      const auto& rec = trace.rounds[t];
      if (rec.sample_ids.size() != K || rec.detail.size() != K) {
        throw IngestionError("trace round " + std::to_string(t + 1) + " is missing per-node rows");
      }
      for (std::size_t k = 0; k < K; ++k)
        if (rec.sample_ids[k] != data.streams.at(t, k).id) {
          throw IngestionError("trace sample stream does not match the config's data stream");
        }
    }
    const KernelDictionary dict = trial_dictionary(cfg, trial, data.dataset.dim());
    OracleResult res;

    // Regret against the exact ridge oracle.
    double alg_loss = 0.0;
    for (const auto& rec : trace.rounds)
      alg_loss += rec.round_sq_error + static_cast<double>(K) * cfg.loss.lambda * rec.model_norm_sq;
    Vector y(static_cast<Eigen::Index>(data.streams.samples.size()));
    for (std::size_t i = 0; i < data.streams.samples.size(); ++i) y[static_cast<Eigen::Index>(i)] = data.streams.samples[i].y;
    std::vector<double> hindsight;
    for (KernelId p = 0; p < dict.size(); ++p) {
      const auto Z = feature_matrix(dict, p, data.streams.samples);
      hindsight.push_back(best_hindsight(Z, y, cfg.loss.lambda, cfg.loss.radius).loss);
    }
    std::optional<KernelId> fixed;
    if (cfg.algorithm == Algorithm::kSkOfl) fixed = cfg.sk_kernel - 1;
    res.regret = regret(alg_loss, hindsight, T, fixed);

    // Network-wide PMF vs the decentralized one.
    const bool has_pmf = cfg.algorithm == Algorithm::kMkOfl || cfg.algorithm == Algorithm::kNaiveMk;
    if (has_pmf) {
      LossHistory history(T);
      std::vector<double> rates(T);
      for (std::size_t t = 0; t < T; ++t) {
        rates[t] = trace.rounds[t].steps.global;
        for (const auto& d : trace.rounds[t].detail) history[t].push_back(d.losses);
      }
      res.central_pmf = centralized_pmf(history, rates, cfg.loss.clip_for_hedge).pmf;
      for (std::size_t t = 0; t < T; ++t) {
        const auto& detail = trace.rounds[t].detail;
        std::vector<double> q;
        if (cfg.algorithm == Algorithm::kMkOfl) {
          std::vector<KernelId> proposals;
          std::vector<std::vector<double>> pmfs;
          for (const auto& d : detail) {
            proposals.push_back(d.proposal);
            pmfs.push_back(d.pmf);
          }
          q = network_pmf(proposals, pmfs);
        } else {
          q = geometric_mix(detail);
        }
        res.tv.push_back(total_variation(q, res.central_pmf[t]));
        res.network_pmf.push_back(std::move(q));
      }
    }

    // Martingale diagnostic on frozen states from a deterministic replay.
    if (cfg.algorithm == Algorithm::kMkOfl && T >= 2 && opts.frozen_states > 0) {
      const std::size_t n = std::min(opts.frozen_states, T - 1);
      for (std::size_t i = 0; i < n; ++i) res.martingale_rounds.push_back(2 + (i * (T - 2)) / std::max<std::size_t>(n - 1, 1));
      MkOflProtocol replay(cfg, dict, trial_seed(cfg, trial), T);
      Rng mc = make_rng(trial_seed(cfg, trial), Stream::kTrial, 0xC0FFEE);
      std::size_t next = 0;
      for (std::size_t t = 1; t <= T && next < res.martingale_rounds.size(); ++t) {
        if (t == res.martingale_rounds[next]) {
          const std::size_t k = (t - 1) % K;
          EdgeNode node = replay.nodes()[k];
          node.apply_downlink(replay.server().downlink(), replay.known_current_index());
          FrozenState state;
          state.pmf = node.pmf();
          state.node_models = node.models();
          state.features = dict.all_features(data.streams.at(t - 1, k).x);
          state.y = data.streams.at(t - 1, k).y;
          state.lambda = cfg.loss.lambda;
          res.martingale.push_back(martingale_check(state, opts.resamples, mc));
          ++next;
        }
        const TraceRecord rec = replay.run_round(t, data.streams.round(t - 1));
        for (std::size_t k = 0; k < K; ++k)
          if (rec.predictions[k] != trace.rounds[t - 1].predictions[k]) {
            throw IngestionError("replay diverges from the trace at round " + std::to_string(t) +
                                 "; the trace was not produced by this config");
          }
      }
    }

    const fs::path dir = opts.out_dir.empty() ? fs::path(opts.trace_dir) : fs::path(opts.out_dir);
    fs::create_directories(dir);
    const auto& rr = res.regret;
    {
      std::ofstream f(dir / "regret.csv");
      f.precision(17);
      f << "rounds,algorithm_loss,comparator_kernel,comparator_loss,regret,regret_over_t,regret_over_sqrt_t\n";
      f << rr.rounds << ',' << rr.algorithm_loss << ',' << rr.comparator + 1 << ','
        << rr.hindsight_losses[rr.comparator] << ',' << rr.regret << ',' << rr.regret_over_t << ','
        << rr.regret_over_sqrt_t << '\n';
    }
    {
      std::ofstream f(dir / "hindsight.csv");
      f.precision(17);
      f << "kernel,bandwidth_sq,hindsight_loss,gap\n";
      for (std::size_t p = 0; p < rr.hindsight_losses.size(); ++p)
        f << p + 1 << ',' << dict.kernel(p).bandwidth_sq << ',' << rr.hindsight_losses[p] << ','
          << rr.per_kernel_gaps[p] << '\n';
    }
    if (has_pmf) {
      std::ofstream f(dir / "central_pmf.csv");
      f.precision(17);
      f << "round";
      for (std::size_t p = 1; p <= dict.size(); ++p) f << ",qbar_" << p;
      for (std::size_t p = 1; p <= dict.size(); ++p) f << ",qhat_" << p;
      f << ",tv\n";
      for (std::size_t t = 0; t < T; ++t) {
        f << t + 1;
        for (double v : res.central_pmf[t]) f << ',' << v;
        for (double v : res.network_pmf[t]) f << ',' << v;
        f << ',' << res.tv[t] << '\n';
      }
    }
    if (!res.martingale.empty()) {
      std::ofstream f(dir / "martingale.csv");
      f.precision(17);
      f << "round,node,resamples,mean,stddev,band,within_band\n";
      for (std::size_t i = 0; i < res.martingale.size(); ++i) {
        const auto& m = res.martingale[i];
        f << res.martingale_rounds[i] << ',' << (res.martingale_rounds[i] - 1) % K + 1 << ',' << m.resamples
          << ',' << m.mean << ',' << m.stddev << ',' << m.band << ',' << (m.within_band ? 1 : 0) << '\n';
      }
    }
    nlohmann::json summary = {
        {"rounds", T},
        {"algorithm_loss", rr.algorithm_loss},
        {"comparator_kernel", rr.comparator + 1},
        {"fixed_kernel", rr.fixed_kernel},
        {"regret", rr.regret},
        {"regret_over_t", rr.regret_over_t},
        {"regret_over_sqrt_t", rr.regret_over_sqrt_t},
        {"hindsight_losses", rr.hindsight_losses},
    };
    if (has_pmf) {
      summary["mean_tv"] = std::accumulate(res.tv.begin(), res.tv.end(), 0.0) / static_cast<double>(T);
      summary["max_tv"] = *std::max_element(res.tv.begin(), res.tv.end());
    }
    if (!res.martingale.empty()) {
      std::size_t inside = 0;
      for (const auto& m : res.martingale) inside += m.within_band ? 1 : 0;
      summary["martingale_within_band"] = inside;
      summary["martingale_states"] = res.martingale.size();
    }
    write_json_file(summary, dir / "oracle_summary.json");
    out << "regret R_T=" << std::setprecision(6) << rr.regret << " R_T/sqrt(T)=" << rr.regret_over_sqrt_t
        << " comparator kernel " << rr.comparator + 1 << "\nwrote " << dir.string() << '\n';
    return kExitOk;
  });
}

}  // namespace mkofl
